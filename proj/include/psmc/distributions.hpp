#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "psmc/rng.hpp"
#include "psmc/state.hpp"

namespace psmc {

/// A total, deterministic classifier of states into cells 0..cell_count()-1.
/// Cell j here is A_{j+1} in one-based notation; one-based labels only
/// appear in serialized output.
class Partition {
 public:
  virtual ~Partition() = default;
  virtual int cell_count() const noexcept = 0;
  virtual int classify(StateView x) const = 0;
};

/// {x : sum(x) > 0} is cell 0; everything else, including the hyperplane
/// itself, is cell 1.
class HalfSpacePartition final : public Partition {
 public:
  int cell_count() const noexcept override { return 2; }
  int classify(StateView x) const override;
};

/// {x : sum(x) >= 0} is cell 0, the rest cell 1.
class SignPartition final : public Partition {
 public:
  int cell_count() const noexcept override { return 2; }
  int classify(StateView x) const override;
};

/// Lookup table for enumerated spaces; x[0] holds the state index.
class LabelPartition final : public Partition {
 public:
  explicit LabelPartition(std::vector<int> labels);
  int cell_count() const noexcept override { return cells_; }
  int classify(StateView x) const override;
  const std::vector<int>& labels() const noexcept { return labels_; }

 private:
  std::vector<int> labels_;
  int cells_ = 0;
};

class WholeSpacePartition final : public Partition {
 public:
  int cell_count() const noexcept override { return 1; }
  int classify(StateView) const override { return 0; }
};

/// Unnormalized base log-density log q together with its declared partition
/// and an exact sampler for q^beta.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual std::string name() const = 0;
  virtual StateKind kind() const noexcept = 0;
  virtual std::size_t dimension() const noexcept = 0;
  virtual double log_density(StateView x) const = 0;
  /// sup_x log q(x); used to bound the importance weights.
  virtual double log_density_sup() const = 0;
  virtual const Partition& partition() const noexcept = 0;

  virtual bool can_sample_exactly(double beta) const noexcept = 0;
  /// One exact draw from the distribution proportional to q^beta.
  virtual void sample_tempered(double beta, StateSpan out, Stream& rng) const = 0;

  /// Coordinate scale used for the default random-walk proposal.
  virtual double proposal_scale() const noexcept { return 1.0; }

  /// Size of the state space for enumerable models, 0 otherwise.
  virtual std::size_t state_count() const noexcept { return 0; }
};

using ModelPtr = std::shared_ptr<const TargetModel>;

struct GaussianMixtureParams {
  std::size_t dimension = 2;
  double weight = 0.5;  // w, mass of the component on H
  double nu = 1.0;      // components centered at +/- nu * 1_d
  double sigma = 1.0;
};

/// w N(nu 1, sigma^2) on H plus (1-w) N(-nu 1, sigma^2) on H^c, in
/// unnormalized form log q = log w - |x - nu 1|^2 / (2 sigma^2) on H.
class GaussianMixtureModel final : public TargetModel {
 public:
  explicit GaussianMixtureModel(GaussianMixtureParams params);

  std::string name() const override { return "gaussian-mixture"; }
  StateKind kind() const noexcept override { return StateKind::real_vector; }
  std::size_t dimension() const noexcept override { return params_.dimension; }
  double log_density(StateView x) const override;
  double log_density_sup() const override;
  const Partition& partition() const noexcept override { return partition_; }
  bool can_sample_exactly(double beta) const noexcept override { return beta > 0.0; }
  void sample_tempered(double beta, StateSpan out, Stream& rng) const override;
  double proposal_scale() const noexcept override { return params_.sigma; }

  const GaussianMixtureParams& params() const noexcept { return params_; }

 private:
  GaussianMixtureParams params_;
  HalfSpacePartition partition_;
};

/// Mean-field Ising model on {-1,+1}^d, log q = alpha/(2d) (sum x)^2, with
/// the sign partition. d must be odd.
class IsingModel final : public TargetModel {
 public:
  IsingModel(std::size_t dimension, double alpha);

  std::string name() const override { return "ising"; }
  StateKind kind() const noexcept override { return StateKind::spin_vector; }
  std::size_t dimension() const noexcept override { return dimension_; }
  double log_density(StateView x) const override;
  double log_density_sup() const override;
  const Partition& partition() const noexcept override { return partition_; }
  bool can_sample_exactly(double) const noexcept override { return true; }
  void sample_tempered(double beta, StateSpan out, Stream& rng) const override;
  std::size_t state_count() const noexcept override;

  double alpha() const noexcept { return alpha_; }
  /// log q as a function of the magnetization sum(x).
  double log_density_of_sum(int magnetization) const noexcept;

 private:
  std::size_t dimension_;
  double alpha_;
  SignPartition partition_;
};

/// A finite space {0..n-1} with tabulated log q and cell labels.
class DiscreteModel final : public TargetModel {
 public:
  DiscreteModel(std::vector<double> log_q, std::vector<int> labels);

  std::string name() const override { return "discrete"; }
  StateKind kind() const noexcept override { return StateKind::discrete; }
  std::size_t dimension() const noexcept override { return 1; }
  double log_density(StateView x) const override;
  double log_density_sup() const override;
  const Partition& partition() const noexcept override { return partition_; }
  bool can_sample_exactly(double) const noexcept override { return true; }
  void sample_tempered(double beta, StateSpan out, Stream& rng) const override;
  std::size_t state_count() const noexcept override { return log_q_.size(); }

  const std::vector<double>& log_q() const noexcept { return log_q_; }
  const std::vector<int>& labels() const noexcept { return partition_.labels(); }

 private:
  std::vector<double> log_q_;
  LabelPartition partition_;
};

ModelPtr gaussian_mixture_target(std::size_t d, double w, double nu, double sigma);
ModelPtr ising_target(std::size_t d, double alpha);
ModelPtr discrete_target(std::vector<double> log_q, std::vector<int> labels);

/// mu_v proportional to q^{beta_v}, v = 0..V.
class AnnealedFamily {
 public:
  /// betas must be strictly increasing and end at exactly 1. beta_0 = 0 is
  /// allowed only for finite state spaces (uniform start).
  AnnealedFamily(ModelPtr model, std::vector<double> betas);

  /// Prepends beta = 0, i.e. starts from the uniform distribution.
  static AnnealedFamily with_uniform_start(ModelPtr model, std::span<const double> betas);

  const TargetModel& model() const noexcept { return *model_; }
  const ModelPtr& model_ptr() const noexcept { return model_; }
  const Partition& partition() const noexcept { return model_->partition(); }
  std::span<const double> betas() const noexcept { return betas_; }
  double beta(std::size_t v) const { return betas_.at(v); }
  /// V, the number of resample/mutate stages.
  std::size_t stages() const noexcept { return betas_.size() - 1; }
  std::size_t dimension() const noexcept { return model_->dimension(); }

 private:
  ModelPtr model_;
  std::vector<double> betas_;
};

/// log w_v(x) = (beta_v - beta_{v-1}) log q(x), for 1 <= v <= V.
double log_weight(const AnnealedFamily& family, std::size_t v, StateView x);

/// beta_v = (1/d)(1+1/d)^v for v < ceil(d log d), then 1.
std::vector<double> geometric_schedule(std::size_t d);

/// beta_v = v/d for v = 1..d.
std::vector<double> linear_schedule(std::size_t d);

/// mu_v(A_j) for v = 0..V (rows) and j = 0..p-1 (columns).
using CellMassTable = std::vector<std::vector<double>>;

/// Closed-form cell masses and normalizing constants for the two worked
/// families, evaluated along a schedule.
class AnalyticCatalog {
 public:
  enum class Family { gaussian_mixture, mean_field_ising };

  static AnalyticCatalog gaussian_mixture(GaussianMixtureParams params, std::vector<double> betas);
  static AnalyticCatalog ising(std::size_t d, double alpha, std::vector<double> betas);

  Family family() const noexcept { return family_; }
  std::span<const double> betas() const noexcept { return betas_; }

  /// mu_v(A_j); sums to one.
  std::vector<double> cell_probabilities(std::size_t v) const;
  /// z_{v-1} / z_v. Gaussian family only.
  double z_ratio(std::size_t v) const;
  /// log z(beta) = log of the integral of q^beta. Gaussian only.
  double log_partition(double beta) const;
  CellMassTable cell_mass_table() const;

 private:
  AnalyticCatalog(Family f, GaussianMixtureParams g, std::size_t d, double alpha,
                  std::vector<double> betas);

  Family family_;
  GaussianMixtureParams gaussian_;
  std::size_t ising_dimension_ = 0;
  double ising_alpha_ = 0.0;
  std::vector<double> betas_;
};

std::vector<double> analytic_cell_probability(const AnalyticCatalog& catalog, std::size_t v);
double analytic_z_ratio(const AnalyticCatalog& catalog, std::size_t v);

/// Exact log z(beta) for the mean-field Ising model by summing over
/// magnetization classes; feasible for any d.
double ising_log_partition(std::size_t d, double alpha, double beta);

}  // namespace psmc
