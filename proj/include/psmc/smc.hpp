#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "psmc/distributions.hpp"
#include "psmc/kernels.hpp"
#include "psmc/state.hpp"

namespace psmc {

enum class Engine { parallel, serial };

struct RunConfig {
  AnnealedFamily family;
  std::size_t particles = 1000;  // N
  std::size_t steps = 10;        // t, kernel applications per stage
  KernelSpec kernel{};
  std::uint64_t seed = 0;
  int threads = 0;  // 0: OpenMP default
  Engine engine = Engine::parallel;
  /// false runs the unrestricted baseline: cells are relabeled after moves.
  bool restricted = true;
};

struct ParticleSystem {
  StateMatrix states;
  std::vector<int> cells;
  std::size_t stage = 0;

  std::size_t size() const noexcept { return states.rows(); }
  std::vector<std::size_t> occupancy(int cell_count) const;
};

struct StepDiagnostics {
  std::size_t stage = 0;
  std::vector<double> cell_weight_sums;  // w_hat_v^j
  std::vector<double> resample_probs;    // P_hat_v^j
  std::vector<std::size_t> occupancy_before;
  std::vector<std::size_t> occupancy_after;
  double log_z_increment = 0.0;  // log sum_j w_hat_v^j
};

struct RunReport {
  ParticleSystem final;
  std::vector<std::size_t> initial_occupancy;
  std::vector<StepDiagnostics> stages;
  double log_z = 0.0;  // log(z_V / z_0) estimate
  std::uint64_t seed = 0;
  std::vector<double> stage_seconds;
};

/// Thrown when every importance weight of a stage underflows to zero.
class WeightCollapse : public std::runtime_error {
 public:
  explicit WeightCollapse(std::size_t stage)
      : std::runtime_error("weight collapse at stage " + std::to_string(stage)), stage_(stage) {}
  std::size_t stage() const noexcept { return stage_; }

 private:
  std::size_t stage_;
};

ParticleSystem initialize(const RunConfig& config);

/// Multinomial resampling with probabilities proportional to exp(log_w).
/// Offspring i draws its ancestor from the stream (seed, stage, resample, i).
/// Returns the diagnostics of the stage; occupancy_after counts the
/// resampled cells. `ancestors`, when given, receives the source indices.
StepDiagnostics resample(ParticleSystem& system, std::span<const double> log_w, int cell_count,
                         std::uint64_t seed, std::size_t stage, std::vector<std::size_t>* ancestors = nullptr);

void mutate(ParticleSystem& system, const RestrictedKernel& kernel, std::size_t steps, std::uint64_t seed,
            Engine engine = Engine::parallel, int threads = 0);

using StageObserver = std::function<void(const ParticleSystem&, const StepDiagnostics&)>;

/// `observer` sees each stage after mutation; `after_resample` sees the
/// resampled system before mutation.
RunReport run(const RunConfig& config, const StageObserver& observer = {},
              const StageObserver& after_resample = {});

/// N^-1 sum f(X_V^i); throws std::domain_error if |f| > 1 on a particle.
double estimate(const RunReport& report, const std::function<double(StateView)>& f);

/// Sum over stages of log sum_j w_hat_v^j.
double estimate_log_partition(const RunReport& report);

/// For v = 1..V: max_j |P_hat_v^j - mu_v(A_j)|.
std::vector<double> cell_tracking_error(const RunReport& report, const CellMassTable& masses);

/// phi^-v mu_v(A_j) <= P_hat_v^j <= phi^v mu_v(A_j) for every v and j.
bool resampling_sandwich_holds(const RunReport& report, const CellMassTable& masses, double phi);

}  // namespace psmc
