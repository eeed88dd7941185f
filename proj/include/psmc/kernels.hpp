#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psmc/discrete_space.hpp"
#include "psmc/distributions.hpp"
#include "psmc/rng.hpp"
#include "psmc/state.hpp"

namespace psmc {

enum class KernelKind {
  automatic,         // pick from the state kind
  random_walk,       // Gaussian random-walk Metropolis on real vectors
  single_site_flip,  // flip one uniformly chosen spin, Metropolis accept
  path_walk,         // +/-1 nearest-neighbour Metropolis on {0..n-1}
  matrix,            // explicit row-stochastic matrix on {0..n-1}
  identity,
};

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

struct KernelSpec {
  KernelKind kind = KernelKind::automatic;
  /// Proposal variance per coordinate for random_walk; <= 0 selects
  /// 2.38^2 sigma^2 / (beta d).
  double step_variance = 0.0;
};

struct Transition {
  State to;
  double probability;
};

/// A mu_beta-invariant Markov kernel. Immutable; stepping takes the random
/// stream explicitly.
class MarkovKernel {
 public:
  static MarkovKernel random_walk(ModelPtr model, double beta, double step_variance);
  static MarkovKernel single_site_flip(ModelPtr model, double beta);
  static MarkovKernel path_walk(ModelPtr model, double beta);
  /// Kernel on state indices {0..n-1} with the given row-stochastic matrix.
  static MarkovKernel from_matrix(const Eigen::MatrixXd& matrix);
  static MarkovKernel identity();

  KernelKind kind() const noexcept { return kind_; }
  double beta() const noexcept { return beta_; }
  double step_variance() const noexcept { return step_sd_ * step_sd_; }

  /// Scratch doubles needed by step() for states of dimension d.
  std::size_t workspace_size(std::size_t d) const noexcept { return d; }

  /// Advances x in place by one transition.
  void step(StateSpan x, std::span<double> workspace, Stream& rng) const;

  /// Exact one-step law from x; only for kernels on enumerable spaces.
  std::vector<Transition> transitions(StateView x) const;

 private:
  MarkovKernel() = default;
  double log_target(StateView x) const { return beta_ * model_->log_density(x); }

  KernelKind kind_ = KernelKind::identity;
  ModelPtr model_;
  double beta_ = 1.0;
  double step_sd_ = 0.0;
  std::shared_ptr<const Eigen::MatrixXd> matrix_;
  std::shared_ptr<const Eigen::MatrixXd> row_cdf_;
};

/// Builds K_v for stage v of a family.
MarkovKernel make_kernel(const KernelSpec& spec, const AnnealedFamily& family, std::size_t v);

/// K restricted to the cell of its starting point: a proposal that leaves
/// the cell is replaced by staying put.
class RestrictedKernel {
 public:
  RestrictedKernel(MarkovKernel base, ModelPtr model);

  const MarkovKernel& base() const noexcept { return base_; }
  const Partition& partition() const noexcept { return model_->partition(); }

  std::size_t workspace_size(std::size_t d) const noexcept { return d + base_.workspace_size(d); }

  /// One restricted step from x, whose cell is `cell`.
  void step(StateSpan x, int cell, std::span<double> workspace, Stream& rng) const;
  std::vector<Transition> transitions(StateView x) const;

 private:
  MarkovKernel base_;
  ModelPtr model_;
};

/// Convenience wrappers taking and returning states by value.
State step(const MarkovKernel& kernel, StateView x, Stream& rng);
State restricted_step(const RestrictedKernel& kernel, StateView x, Stream& rng);

/// Exact transition matrix over an enumerated space.
Eigen::MatrixXd transition_matrix(const MarkovKernel& kernel, const DiscreteSpace& space);
Eigen::MatrixXd transition_matrix(const RestrictedKernel& kernel, const DiscreteSpace& space);

/// Restriction identity applied to a full matrix: mass sent outside the
/// current cell is returned to the diagonal.
Eigen::MatrixXd restrict_matrix(const Eigen::MatrixXd& p, std::span<const int> labels);

/// Rows/columns of `p` for the members of one cell.
Eigen::MatrixXd cell_submatrix(const Eigen::MatrixXd& p, std::span<const std::size_t> members);

/// Unique stationary distribution of an irreducible row-stochastic matrix.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& p);

/// 1 - (second-largest eigenvalue modulus). Zero for reducible chains.
double spectral_gap(const Eigen::MatrixXd& p);

/// ceil((1/gap) (log(2/eps) + log(M - 1))), clamped below at 1.
long mixing_time_bound(double gap, double epsilon, double warmness);

}  // namespace psmc
