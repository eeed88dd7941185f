#include "psmc/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "psmc/numeric.hpp"

namespace psmc {

namespace {

double coordinate_sum(StateView x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

double log_binomial(std::size_t n, std::size_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// Inverse-cdf draw from unnormalized log-probabilities.
std::size_t draw_from_log_masses(std::span<const double> log_mass, Stream& rng) {
  const double lse = log_sum_exp(log_mass);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < log_mass.size(); ++k) {
    acc += std::exp(log_mass[k] - lse);
    if (u < acc) return k;
  }
  // Rounding left u above the final partial sum; take the last positive entry.
  for (std::size_t k = log_mass.size(); k-- > 0;) {
    if (std::isfinite(log_mass[k])) return k;
  }
  return log_mass.size() - 1;
}

}  // namespace

int HalfSpacePartition::classify(StateView x) const { return coordinate_sum(x) > 0.0 ? 0 : 1; }

int SignPartition::classify(StateView x) const { return coordinate_sum(x) >= 0.0 ? 0 : 1; }

LabelPartition::LabelPartition(std::vector<int> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw std::invalid_argument("LabelPartition: no states");
  const int max_label = *std::max_element(labels_.begin(), labels_.end());
  if (*std::min_element(labels_.begin(), labels_.end()) < 0)
    throw std::invalid_argument("LabelPartition: negative cell label");
  cells_ = max_label + 1;
  std::vector<bool> seen(static_cast<std::size_t>(cells_), false);
  for (int l : labels_) seen[static_cast<std::size_t>(l)] = true;
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw std::invalid_argument("LabelPartition: empty cell");
}

int LabelPartition::classify(StateView x) const {
  const auto idx = static_cast<std::size_t>(x[0]);
  return labels_.at(idx);
}

// ---------------------------------------------------------------------------

GaussianMixtureModel::GaussianMixtureModel(GaussianMixtureParams params) : params_(params) {
  if (params_.dimension < 1) throw std::invalid_argument("gaussian mixture: dimension must be >= 1");
  if (!(params_.sigma > 0.0)) throw std::invalid_argument("gaussian mixture: sigma must be > 0");
  if (!(params_.weight > 0.0 && params_.weight < 1.0))
    throw std::invalid_argument("gaussian mixture: weight must lie in (0, 1)");
  if (!std::isfinite(params_.nu)) throw std::invalid_argument("gaussian mixture: nu must be finite");
}

double GaussianMixtureModel::log_density(StateView x) const {
  const bool in_h = partition_.classify(x) == 0;
  const double center = in_h ? params_.nu : -params_.nu;
  double sq = 0.0;
  for (double c : x) sq += (c - center) * (c - center);
  const double lw = in_h ? std::log(params_.weight) : std::log1p(-params_.weight);
  return lw - sq / (2.0 * params_.sigma * params_.sigma);
}

double GaussianMixtureModel::log_density_sup() const {
  return std::log(std::max(params_.weight, 1.0 - params_.weight));
}

void GaussianMixtureModel::sample_tempered(double beta, StateSpan out, Stream& rng) const {
  if (!(beta > 0.0)) throw std::invalid_argument("gaussian mixture: cannot sample at beta <= 0");
  const std::size_t d = params_.dimension;
  const double sd = params_.sigma / std::sqrt(beta);
  const double lwh = beta * std::log(params_.weight);
  const double lwc = beta * std::log1p(-params_.weight);
  const double p_h = 1.0 / (1.0 + std::exp(lwc - lwh));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  // Projection of the H-component center onto the unit normal 1/sqrt(d).
  const double m = params_.nu * std::sqrt(static_cast<double>(d));

  for (;;) {
    const bool in_h = rng.uniform() < p_h;
    // Truncated normal for the signed distance s > 0 from the hyperplane,
    // drawn through the upper tail: P(Z > a) = Phi(-a).
    const double a = -m / sd;
    const double tail = normal_cdf(-a);
    double s = m + sd * (-normal_quantile(rng.uniform_open() * tail));
    if (!in_h) s = -s;

    double proj = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      out[k] = sd * rng.normal();
      proj += out[k];
    }
    proj *= inv_sqrt_d;
    for (std::size_t k = 0; k < d; ++k) out[k] += (s - proj) * inv_sqrt_d;

    // A draw within rounding of the hyperplane could land on the wrong side;
    // redraw so the sample's cell matches the chosen component.
    if ((partition_.classify(out) == 0) == in_h) return;
  }
}

// ---------------------------------------------------------------------------

IsingModel::IsingModel(std::size_t dimension, double alpha) : dimension_(dimension), alpha_(alpha) {
  if (dimension_ == 0 || dimension_ % 2 == 0)
    throw std::invalid_argument("ising: dimension must be odd, got " + std::to_string(dimension));
  if (!std::isfinite(alpha_)) throw std::invalid_argument("ising: alpha must be finite");
}

double IsingModel::log_density_of_sum(int magnetization) const noexcept {
  const double m = magnetization;
  return alpha_ / (2.0 * static_cast<double>(dimension_)) * m * m;
}

double IsingModel::log_density(StateView x) const {
  return log_density_of_sum(static_cast<int>(coordinate_sum(x)));
}

double IsingModel::log_density_sup() const {
  // (sum x)^2 ranges over {1, 9, ..., d^2} for odd d.
  return alpha_ >= 0.0 ? log_density_of_sum(static_cast<int>(dimension_)) : log_density_of_sum(1);
}

std::size_t IsingModel::state_count() const noexcept {
  return dimension_ < 63 ? (std::size_t{1} << dimension_) : 0;
}

void IsingModel::sample_tempered(double beta, StateSpan out, Stream& rng) const {
  const std::size_t d = dimension_;
  if (beta == 0.0) {
    for (std::size_t k = 0; k < d; ++k) out[k] = (rng() >> 63) ? 1.0 : -1.0;
    return;
  }
  // Number of down spins k has mass C(d,k) exp(beta log q(d - 2k)).
  std::vector<double> log_mass(d + 1);
  for (std::size_t k = 0; k <= d; ++k) {
    const int m = static_cast<int>(d) - 2 * static_cast<int>(k);
    log_mass[k] = log_binomial(d, k) + beta * log_density_of_sum(m);
  }
  const std::size_t down = draw_from_log_masses(log_mass, rng);
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t k = 0; k < down; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.below(d - k));
    std::swap(order[k], order[j]);
  }
  for (std::size_t k = 0; k < d; ++k) out[k] = 1.0;
  for (std::size_t k = 0; k < down; ++k) out[order[k]] = -1.0;
}

// ---------------------------------------------------------------------------

DiscreteModel::DiscreteModel(std::vector<double> log_q, std::vector<int> labels)
    : log_q_(std::move(log_q)), partition_(std::move(labels)) {
  if (log_q_.size() != partition_.labels().size())
    throw std::invalid_argument("discrete model: log_q and labels differ in length");
  for (double v : log_q_) {
    if (!std::isfinite(v)) throw std::invalid_argument("discrete model: log q must be finite");
  }
}

double DiscreteModel::log_density(StateView x) const {
  return log_q_.at(static_cast<std::size_t>(x[0]));
}

double DiscreteModel::log_density_sup() const {
  return *std::max_element(log_q_.begin(), log_q_.end());
}

void DiscreteModel::sample_tempered(double beta, StateSpan out, Stream& rng) const {
  std::vector<double> lm(log_q_.size());
  for (std::size_t k = 0; k < lm.size(); ++k) lm[k] = beta * log_q_[k];
  out[0] = static_cast<double>(draw_from_log_masses(lm, rng));
}

// ---------------------------------------------------------------------------

ModelPtr gaussian_mixture_target(std::size_t d, double w, double nu, double sigma) {
  return std::make_shared<GaussianMixtureModel>(GaussianMixtureParams{d, w, nu, sigma});
}

ModelPtr ising_target(std::size_t d, double alpha) {
  return std::make_shared<IsingModel>(d, alpha);
}

ModelPtr discrete_target(std::vector<double> log_q, std::vector<int> labels) {
  return std::make_shared<DiscreteModel>(std::move(log_q), std::move(labels));
}

// ---------------------------------------------------------------------------

AnnealedFamily::AnnealedFamily(ModelPtr model, std::vector<double> betas)
    : model_(std::move(model)), betas_(std::move(betas)) {
  if (!model_) throw std::invalid_argument("annealed family: null model");
  if (betas_.empty()) throw std::invalid_argument("annealed family: empty schedule");
  if (betas_.back() != 1.0) throw std::invalid_argument("annealed family: final beta must be 1");
  for (std::size_t v = 1; v < betas_.size(); ++v) {
    if (!(betas_[v] > betas_[v - 1]))
      throw std::invalid_argument("annealed family: betas must be strictly increasing");
  }
  const bool finite_space = model_->kind() != StateKind::real_vector;
  if (betas_.front() < 0.0 || (betas_.front() == 0.0 && !finite_space))
    throw std::invalid_argument("annealed family: beta_0 must be > 0 on a continuous space");
}

AnnealedFamily AnnealedFamily::with_uniform_start(ModelPtr model, std::span<const double> betas) {
  std::vector<double> all;
  all.reserve(betas.size() + 1);
  all.push_back(0.0);
  all.insert(all.end(), betas.begin(), betas.end());
  return AnnealedFamily(std::move(model), std::move(all));
}

double log_weight(const AnnealedFamily& family, std::size_t v, StateView x) {
  if (v < 1 || v > family.stages())
    throw std::out_of_range("log_weight: stage " + std::to_string(v) + " outside 1..V");
  const double lq = family.model().log_density(x);
  if (!std::isfinite(lq)) throw std::domain_error("log_weight: non-finite base log-density");
  return (family.beta(v) - family.beta(v - 1)) * lq;
}

std::vector<double> geometric_schedule(std::size_t d) {
  if (d < 2) throw std::invalid_argument("geometric_schedule: d must be >= 2");
  const double dd = static_cast<double>(d);
  const auto count = static_cast<std::size_t>(std::ceil(dd * std::log(dd)));
  std::vector<double> betas;
  betas.reserve(count + 1);
  for (std::size_t v = 0; v < count; ++v) {
    const double b = std::pow(1.0 + 1.0 / dd, static_cast<double>(v)) / dd;
    if (b >= 1.0) break;
    betas.push_back(b);
  }
  betas.push_back(1.0);
  return betas;
}

std::vector<double> linear_schedule(std::size_t d) {
  if (d < 1) throw std::invalid_argument("linear_schedule: d must be >= 1");
  std::vector<double> betas(d);
  for (std::size_t v = 1; v <= d; ++v) betas[v - 1] = static_cast<double>(v) / static_cast<double>(d);
  betas.back() = 1.0;
  return betas;
}

// ---------------------------------------------------------------------------

AnalyticCatalog::AnalyticCatalog(Family f, GaussianMixtureParams g, std::size_t d, double alpha,
                                 std::vector<double> betas)
    : family_(f), gaussian_(g), ising_dimension_(d), ising_alpha_(alpha), betas_(std::move(betas)) {
  if (betas_.empty()) throw std::invalid_argument("analytic catalog: empty schedule");
}

AnalyticCatalog AnalyticCatalog::gaussian_mixture(GaussianMixtureParams params,
                                                  std::vector<double> betas) {
  GaussianMixtureModel check(params);  // validates parameters
  for (double b : betas) {
    if (!(b > 0.0)) throw std::invalid_argument("analytic catalog: gaussian betas must be > 0");
  }
  return AnalyticCatalog(Family::gaussian_mixture, params, 0, 0.0, std::move(betas));
}

AnalyticCatalog AnalyticCatalog::ising(std::size_t d, double alpha, std::vector<double> betas) {
  IsingModel check(d, alpha);
  return AnalyticCatalog(Family::mean_field_ising, {}, d, alpha, std::move(betas));
}

std::vector<double> AnalyticCatalog::cell_probabilities(std::size_t v) const {
  const double beta = betas_.at(v);
  if (family_ == Family::mean_field_ising) return {0.5, 0.5};
  // Both truncated components carry the same Gaussian-integral factor, so
  // only the tempered mixture weights w^beta and (1-w)^beta remain.
  const double lh = beta * std::log(gaussian_.weight);
  const double lc = beta * std::log1p(-gaussian_.weight);
  const double p_h = 1.0 / (1.0 + std::exp(lc - lh));
  return {p_h, 1.0 - p_h};
}

double AnalyticCatalog::log_partition(double beta) const {
  if (family_ != Family::gaussian_mixture)
    throw std::logic_error("analytic catalog: no closed-form partition function for this family");
  const auto& g = gaussian_;
  const double d = static_cast<double>(g.dimension);
  const double lw = std::log(std::exp(beta * std::log(g.weight)) +
                             std::exp(beta * std::log1p(-g.weight)));
  const double proj = g.nu * std::sqrt(d * beta) / g.sigma;
  return lw + normal_log_cdf(proj) + 0.5 * d * std::log(2.0 * M_PI * g.sigma * g.sigma / beta);
}

double AnalyticCatalog::z_ratio(std::size_t v) const {
  if (v < 1 || v >= betas_.size()) throw std::out_of_range("analytic catalog: stage out of range");
  return std::exp(log_partition(betas_[v - 1]) - log_partition(betas_[v]));
}

CellMassTable AnalyticCatalog::cell_mass_table() const {
  CellMassTable t;
  t.reserve(betas_.size());
  for (std::size_t v = 0; v < betas_.size(); ++v) t.push_back(cell_probabilities(v));
  return t;
}

std::vector<double> analytic_cell_probability(const AnalyticCatalog& catalog, std::size_t v) {
  return catalog.cell_probabilities(v);
}

double analytic_z_ratio(const AnalyticCatalog& catalog, std::size_t v) {
  return catalog.z_ratio(v);
}

double ising_log_partition(std::size_t d, double alpha, double beta) {
  IsingModel model(d, alpha);
  std::vector<double> terms(d + 1);
  for (std::size_t k = 0; k <= d; ++k) {
    const int m = static_cast<int>(d) - 2 * static_cast<int>(k);
    terms[k] = log_binomial(d, k) + beta * model.log_density_of_sum(m);
  }
  return log_sum_exp(terms);
}

}  // namespace psmc
