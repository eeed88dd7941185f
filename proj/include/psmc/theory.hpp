#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "psmc/discrete_space.hpp"
#include "psmc/distributions.hpp"

namespace psmc {

/// Inputs of the particle and mutation bounds. All logarithms are natural.
struct BoundInputs {
  double epsilon = 0.25;
  std::size_t stages = 1;  // V
  std::size_t cells = 1;   // p
  double W = 1.0;          // max_v sup_x w_v(x)
  double Z = 1.0;          // max_v z_{v-1}/z_v
  double mu_star = 1.0;    // min_{v,j} mu_v(A_j)
  std::optional<double> gamma;
  std::optional<double> pi_star;
  std::optional<double> min_gap;
};

/// epsilon / (24 V). Accepts epsilon in (0, 1/2].
double lambda_of(double epsilon, std::size_t stages);

/// (1 + lambda) / (1 - lambda) for lambda in [0, 1).
double phi(double lambda);

/// phi^v <= phi^{2v} < (1 + epsilon) / (1 - epsilon).
bool phi_power_ok(double lambda, std::size_t v, double epsilon);

struct ParticleBound {
  std::uint64_t particles = 0;  // floor(value) + 1
  double value = 0.0;
  double resampling_term = 0.0;   // 3456 (VWZ/mu*)^2 log(64 V p / mu*)
  double cell_count_term = 0.0;   // p^2 log(1024 p^2)
  double mutation_accuracy = 0.0; // mu* / (16 N V)
  double warmness = 7.0;
};

ParticleBound particle_bound(const BoundInputs& in);

/// floor(log(288 N V / (gamma pi*)) / min_gap) + 1.
std::uint64_t gap_based_t_bound(std::uint64_t particles, std::size_t stages, double gamma, double pi_star,
                                double min_gap);

/// Mutation steps from the warm mixing-time bound at the accuracy and
/// warmness that the particle bound prescribes.
std::uint64_t warm_t_bound(const ParticleBound& bound, double min_gap);

/// min_j prod_{v=1}^V min{1, mu_{v-1}(A_j) / mu_v(A_j)}.
double persistence(const CellMassTable& masses);
double mu_star(const CellMassTable& masses);
/// min_j mu_V(A_j).
double pi_star(const CellMassTable& masses);

/// Exact overlap on an enumerated space.
double overlap(const DiscreteSpace& space);

/// Overlap from explicit per-state stage masses and labels.
double overlap(const std::vector<std::vector<double>>& stage_masses, std::span<const int> labels);

double overlap_lower_bound(double zw, double gamma, double pi_star);

struct OverlapEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t stage = 0;  // v of the minimizing pair (v, v+1)
  int cell = 0;
};

/// Self-normalized importance sampling estimate of the overlap using exact
/// draws from each mu_v; the standard error comes from batch means.
OverlapEstimate overlap_monte_carlo(const AnnealedFamily& family, std::size_t draws, std::uint64_t seed);

/// Exact log z(beta) for the built-in models.
double exact_log_partition(const TargetModel& model, double beta);

struct DensityRatioBounds {
  double W = 1.0;
  double Z = 1.0;
};

/// W and Z computed exactly from the model's supremum and partition
/// functions.
DensityRatioBounds density_ratio_bounds(const AnnealedFamily& family);

/// Exact mu_v(A_j) table for the built-in models.
CellMassTable exact_cell_masses(const AnnealedFamily& family);

}  // namespace psmc
