#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psmc/discrete_space.hpp"
#include "psmc/rng.hpp"
#include "psmc/smc.hpp"

namespace psmc {

struct ExactStage {
  std::vector<double> cell_probs;
  double log_z = 0.0;
  /// mu_{v|A_j} over the members of cell j, in DiscreteSpace::cell_members order.
  std::vector<std::vector<double>> conditionals;
};

ExactStage exact_annealed(const DiscreteSpace& space, std::size_t v);

/// Half the L1 distance; both inputs must sum to one within 1e-9.
double tv_distance(std::span<const double> p, std::span<const double> q);

struct CoupledPair {
  std::size_t x = 0;      // index into the cell, drawn from f
  std::size_t x_bar = 0;  // index into the cell, drawn from g
  int cell = 0;
  bool equal = false;
};

/// Maximal coupling of two distributions on the same finite cell: with
/// probability a = sum min(f, g) both coordinates share a draw from
/// min(f, g) / a, otherwise they come from the normalized residuals.
class CouplingMap {
 public:
  CouplingMap(std::vector<double> f, std::vector<double> g, int cell = 0);

  CoupledPair draw(Stream& rng) const;
  /// Probability that the two coordinates agree.
  double agreement() const noexcept { return a_; }

 private:
  static std::size_t pick(const std::vector<double>& cdf, double u);

  std::vector<double> common_cdf_, f_cdf_, g_cdf_;
  double a_ = 0.0;
  int cell_ = 0;
};

CoupledPair coupling_map(std::span<const double> f, std::span<const double> g, Stream& rng, int cell = 0);

struct WarmMixingResult {
  std::size_t tau = 0;
  double gap = 0.0;
  long bound = 0;
  bool within_bound = false;
};

/// Largest cell for which verify_warm_mixing enumerates test sets.
inline constexpr std::size_t warm_mixing_max_states = 16;

/// Smallest t with sup over M-warm starts eta of TV(eta K^t, target) <= epsilon,
/// computed exactly: for a fixed test set B the supremum over the warm-start
/// polytope is a fractional knapsack, and B ranges over all subsets of the cell.
/// Also evaluates the gap-based mixing-time bound for comparison.
WarmMixingResult verify_warm_mixing(const Eigen::MatrixXd& cell_kernel, std::span<const double> target, double M,
                                    double epsilon, std::size_t max_steps = 100000);

/// As above for cell `cell` of a restricted matrix on `space` at stage v.
WarmMixingResult verify_warm_mixing(const DiscreteSpace& space, const Eigen::MatrixXd& restricted, std::size_t v,
                                    int cell, double M, double epsilon);

/// Worst case over M-warm starts of TV(eta K^t, target) for a given K^t.
double warm_start_tv(const Eigen::MatrixXd& kernel_power, std::span<const double> target, double M);

struct StageWarmness {
  std::size_t stage = 0;
  double max_ratio = 0.0;
  double standard_error = 0.0;
  int cell = 0;
  std::size_t state = 0;
  bool unvisited = false;
};

struct WarmnessReport {
  std::vector<StageWarmness> stages;
  /// Fraction of replicates in which some cell had no particles after a resampling step.
  double extinction_rate = 0.0;
  std::size_t collapses = 0;
  std::size_t replicates = 0;
  bool below(double m) const;
};

/// Estimates the resampled marginal (after resampling, before mutation) from
/// `replicates` independent runs of `config` and compares it with mu_v
/// state by state within each cell.
WarmnessReport verify_local_warmness(const DiscreteSpace& space, const RunConfig& config, std::size_t replicates);

struct IdentityStratum {
  std::size_t stage = 0;  // v; compares w_hat_{v+1} with P_hat_v
  int cell = 0;
  std::size_t stratum = 0;
  std::size_t count = 0;
  double mean_lhs = 0.0;
  double mean_rhs = 0.0;
  double standard_error = 0.0;
  double z = 0.0;
  bool skipped = false;
  std::string note;
};

struct IdentityReport {
  std::vector<IdentityStratum> strata;
  bool pass(double z_max = 3.0) const;
};

/// Conditional-expectation identity
///   E[w_hat_{v+1}^j | F] = (z_{v+1}/z_v) (mu_{v+1}(A_j) / mu_v(A_j)) P_hat_v^j,
/// checked per stratum of P_hat_v^j (quantile strata; strata with fewer than
/// 30 replicates are skipped). Stage 0 uses the initial occupancy fraction.
IdentityReport verify_cond_exp_identity(const DiscreteSpace& space, const RunConfig& config, std::size_t replicates,
                                        std::size_t strata = 3);

struct ConcentrationReport {
  double bound = 0.0;
  std::size_t exceedances = 0;
  std::size_t replicates = 0;
  double rate = 0.0;
  double standard_error = 0.0;
  bool pass = false;
};

/// Conditional Hoeffding check on one multinomial resampling step of the
/// reference family: f = a + (b - a) 1_{A_1} on the offspring, with the
/// conditional mean known exactly from the fixed parent weights.
ConcentrationReport verify_concentration(double a, double b, std::size_t particles, double lambda,
                                         std::size_t replicates, std::uint64_t seed);

struct CountRun {
  RunReport report;  // report.final is left empty
  std::vector<std::uint64_t> final_counts;
};

/// Exact-in-distribution simulation of the restricted SMC sampler on an
/// enumerated space that tracks only how many particles sit on each state.
/// Resampling and mutation are multinomial draws; `stage_kernels[v-1]` is the
/// t-step restricted transition matrix used after resampling at stage v.
CountRun simulate_counts(const DiscreteSpace& space, const std::vector<Eigen::MatrixXd>& stage_kernels,
                         std::uint64_t particles, std::uint64_t seed);

/// t-step restricted kernels for every stage of `space` under `spec`.
std::vector<Eigen::MatrixXd> restricted_kernel_powers(const DiscreteSpace& space, const KernelSpec& spec,
                                                      std::size_t steps);

/// Multinomial draw of n trials over probabilities proportional to `weights`.
std::vector<std::uint64_t> multinomial(std::uint64_t n, std::span<const double> weights, Stream& rng);

}  // namespace psmc
