#include "psmc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace psmc {

namespace {

bool metropolis_accept(double log_ratio, Stream& rng) {
  const double u = rng.uniform_open();
  return log_ratio >= 0.0 || std::log(u) < log_ratio;
}

double accept_probability(double log_ratio) {
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

void check_stochastic(const Eigen::MatrixXd& p) {
  if (p.rows() != p.cols() || p.rows() == 0)
    throw std::invalid_argument("transition matrix must be square and nonempty");
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (!(p(i, j) >= -1e-12)) throw std::invalid_argument("transition matrix has a negative entry");
      s += p(i, j);
    }
    if (std::abs(s - 1.0) > 1e-10)
      throw std::invalid_argument("transition matrix row " + std::to_string(i) + " does not sum to 1");
  }
}

// Positive stationary vector if P has a one-dimensional fixed space.
bool try_stationary(const Eigen::MatrixXd& p, Eigen::VectorXd& pi) {
  const Eigen::Index n = p.rows();
  const Eigen::MatrixXd a = p.transpose() - Eigen::MatrixXd::Identity(n, n);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  lu.setThreshold(1e-10);
  if (lu.rank() != n - 1) return false;
  const Eigen::MatrixXd kernel = lu.kernel();
  pi = kernel.col(0);
  pi /= pi.sum();
  return pi.minCoeff() > 0.0;
}

}  // namespace

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::automatic: return "auto";
    case KernelKind::random_walk: return "random-walk";
    case KernelKind::single_site_flip: return "single-site-flip";
    case KernelKind::path_walk: return "path-walk";
    case KernelKind::matrix: return "matrix";
    case KernelKind::identity: return "identity";
  }
  return "auto";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  for (KernelKind k : {KernelKind::automatic, KernelKind::random_walk, KernelKind::single_site_flip,
                       KernelKind::path_walk, KernelKind::matrix, KernelKind::identity}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown kernel kind '" + name + "'");
}

MarkovKernel MarkovKernel::random_walk(ModelPtr model, double beta, double step_variance) {
  if (!model || model->kind() != StateKind::real_vector)
    throw std::invalid_argument("random-walk kernel needs a real-vector model");
  if (!(step_variance > 0.0)) throw std::invalid_argument("random-walk step variance must be positive");
  MarkovKernel k;
  k.kind_ = KernelKind::random_walk;
  k.model_ = std::move(model);
  k.beta_ = beta;
  k.step_sd_ = std::sqrt(step_variance);
  return k;
}

MarkovKernel MarkovKernel::single_site_flip(ModelPtr model, double beta) {
  if (!model || model->kind() != StateKind::spin_vector)
    throw std::invalid_argument("single-site flip kernel needs a spin model");
  MarkovKernel k;
  k.kind_ = KernelKind::single_site_flip;
  k.model_ = std::move(model);
  k.beta_ = beta;
  return k;
}

MarkovKernel MarkovKernel::path_walk(ModelPtr model, double beta) {
  if (!model || model->kind() != StateKind::discrete)
    throw std::invalid_argument("path-walk kernel needs a discrete model");
  MarkovKernel k;
  k.kind_ = KernelKind::path_walk;
  k.model_ = std::move(model);
  k.beta_ = beta;
  return k;
}

MarkovKernel MarkovKernel::from_matrix(const Eigen::MatrixXd& matrix) {
  check_stochastic(matrix);
  Eigen::MatrixXd cdf = matrix;
  for (Eigen::Index i = 0; i < cdf.rows(); ++i) {
    for (Eigen::Index j = 1; j < cdf.cols(); ++j) cdf(i, j) += cdf(i, j - 1);
  }
  MarkovKernel k;
  k.kind_ = KernelKind::matrix;
  k.matrix_ = std::make_shared<const Eigen::MatrixXd>(matrix);
  k.row_cdf_ = std::make_shared<const Eigen::MatrixXd>(std::move(cdf));
  return k;
}

MarkovKernel MarkovKernel::identity() { return MarkovKernel(); }

void MarkovKernel::step(StateSpan x, std::span<double> workspace, Stream& rng) const {
  switch (kind_) {
    case KernelKind::identity:
    case KernelKind::automatic:
      return;
    case KernelKind::random_walk: {
      const std::size_t d = x.size();
      StateSpan y = workspace.first(d);
      for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + step_sd_ * rng.normal();
      if (metropolis_accept(log_target(y) - log_target(x), rng)) std::copy(y.begin(), y.end(), x.begin());
      return;
    }
    case KernelKind::single_site_flip: {
      const std::size_t d = x.size();
      const auto i = static_cast<std::size_t>(rng.below(d));
      StateSpan y = workspace.first(d);
      std::copy(x.begin(), x.end(), y.begin());
      y[i] = -y[i];
      if (metropolis_accept(log_target(y) - log_target(x), rng)) x[i] = y[i];
      return;
    }
    case KernelKind::path_walk: {
      const auto n = static_cast<long>(model_->state_count());
      const long cur = static_cast<long>(x[0]);
      const long next = cur + ((rng() >> 63) ? 1 : -1);
      const double u = rng.uniform_open();
      if (next < 0 || next >= n) return;
      const double y = static_cast<double>(next);
      const double ratio = log_target(std::span<const double>(&y, 1)) - log_target(x);
      if (ratio >= 0.0 || std::log(u) < ratio) x[0] = y;
      return;
    }
    case KernelKind::matrix: {
      const auto row = static_cast<Eigen::Index>(x[0]);
      const double u = rng.uniform();
      const Eigen::Index n = row_cdf_->cols();
      Eigen::Index j = 0;
      while (j < n - 1 && (*row_cdf_)(row, j) <= u) ++j;
      x[0] = static_cast<double>(j);
      return;
    }
  }
}

std::vector<Transition> MarkovKernel::transitions(StateView x) const {
  std::vector<Transition> out;
  const State here(x.begin(), x.end());
  switch (kind_) {
    case KernelKind::identity:
    case KernelKind::automatic:
      out.push_back({here, 1.0});
      return out;
    case KernelKind::random_walk:
      throw std::logic_error("random-walk kernel has no finite transition law");
    case KernelKind::single_site_flip: {
      const std::size_t d = x.size();
      const double lx = log_target(x);
      double stay = 1.0;
      for (std::size_t i = 0; i < d; ++i) {
        State y = here;
        y[i] = -y[i];
        const double prob = accept_probability(log_target(y) - lx) / static_cast<double>(d);
        stay -= prob;
        if (prob > 0.0) out.push_back({std::move(y), prob});
      }
      out.push_back({here, std::max(stay, 0.0)});
      return out;
    }
    case KernelKind::path_walk: {
      const auto n = static_cast<long>(model_->state_count());
      const long cur = static_cast<long>(x[0]);
      const double lx = log_target(x);
      double stay = 1.0;
      for (long next : {cur - 1, cur + 1}) {
        if (next < 0 || next >= n) continue;
        const State y{static_cast<double>(next)};
        const double prob = 0.5 * accept_probability(log_target(y) - lx);
        stay -= prob;
        out.push_back({y, prob});
      }
      out.push_back({here, std::max(stay, 0.0)});
      return out;
    }
    case KernelKind::matrix: {
      const auto row = static_cast<Eigen::Index>(x[0]);
      for (Eigen::Index j = 0; j < matrix_->cols(); ++j) {
        const double prob = (*matrix_)(row, j);
        if (prob > 0.0) out.push_back({State{static_cast<double>(j)}, prob});
      }
      return out;
    }
  }
  return out;
}

MarkovKernel make_kernel(const KernelSpec& spec, const AnnealedFamily& family, std::size_t v) {
  const ModelPtr& model = family.model_ptr();
  const double beta = family.beta(v);
  KernelKind kind = spec.kind;
  if (kind == KernelKind::automatic) {
    switch (model->kind()) {
      case StateKind::real_vector: kind = KernelKind::random_walk; break;
      case StateKind::spin_vector: kind = KernelKind::single_site_flip; break;
      case StateKind::discrete: kind = KernelKind::path_walk; break;
    }
  }
  switch (kind) {
    case KernelKind::random_walk: {
      double h = spec.step_variance;
      if (!(h > 0.0)) {
        const double s = model->proposal_scale();
        h = 2.38 * 2.38 * s * s / (beta * static_cast<double>(model->dimension()));
      }
      return MarkovKernel::random_walk(model, beta, h);
    }
    case KernelKind::single_site_flip: return MarkovKernel::single_site_flip(model, beta);
    case KernelKind::path_walk: return MarkovKernel::path_walk(model, beta);
    case KernelKind::identity: return MarkovKernel::identity();
    case KernelKind::matrix:
    case KernelKind::automatic: break;
  }
  throw std::invalid_argument("kernel kind '" + to_string(kind) + "' cannot be built from a family");
}

RestrictedKernel::RestrictedKernel(MarkovKernel base, ModelPtr model)
    : base_(std::move(base)), model_(std::move(model)) {
  if (!model_) throw std::invalid_argument("restricted kernel: null model");
}

void RestrictedKernel::step(StateSpan x, int cell, std::span<double> workspace, Stream& rng) const {
  const std::size_t d = x.size();
  StateSpan saved = workspace.first(d);
  std::copy(x.begin(), x.end(), saved.begin());
  base_.step(x, workspace.subspan(d), rng);
  if (model_->partition().classify(x) != cell) std::copy(saved.begin(), saved.end(), x.begin());
}

std::vector<Transition> RestrictedKernel::transitions(StateView x) const {
  const int cell = model_->partition().classify(x);
  std::vector<Transition> out;
  double returned = 0.0;
  for (Transition& tr : base_.transitions(x)) {
    if (model_->partition().classify(tr.to) == cell) {
      out.push_back(std::move(tr));
    } else {
      returned += tr.probability;
    }
  }
  if (returned > 0.0) {
    const auto self = std::find_if(out.begin(), out.end(), [&](const Transition& tr) {
      return std::equal(tr.to.begin(), tr.to.end(), x.begin(), x.end());
    });
    if (self != out.end()) {
      self->probability += returned;
    } else {
      out.push_back({State(x.begin(), x.end()), returned});
    }
  }
  return out;
}

State step(const MarkovKernel& kernel, StateView x, Stream& rng) {
  State y(x.begin(), x.end());
  std::vector<double> work(kernel.workspace_size(x.size()));
  kernel.step(y, work, rng);
  return y;
}

State restricted_step(const RestrictedKernel& kernel, StateView x, Stream& rng) {
  State y(x.begin(), x.end());
  std::vector<double> work(kernel.workspace_size(x.size()));
  kernel.step(y, kernel.partition().classify(x), work, rng);
  return y;
}

namespace {

template <class K>
Eigen::MatrixXd build_matrix(const K& kernel, const DiscreteSpace& space) {
  const auto n = static_cast<Eigen::Index>(space.size());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (const Transition& tr : kernel.transitions(space.state(static_cast<std::size_t>(i)))) {
      const std::size_t j = space.index_of(tr.to);
      if (j == space.size()) throw std::logic_error("kernel leaves the enumerated space");
      p(i, static_cast<Eigen::Index>(j)) += tr.probability;
    }
  }
  return p;
}

}  // namespace

Eigen::MatrixXd transition_matrix(const MarkovKernel& kernel, const DiscreteSpace& space) {
  return build_matrix(kernel, space);
}

Eigen::MatrixXd transition_matrix(const RestrictedKernel& kernel, const DiscreteSpace& space) {
  return build_matrix(kernel, space);
}

Eigen::MatrixXd restrict_matrix(const Eigen::MatrixXd& p, std::span<const int> labels) {
  if (static_cast<std::size_t>(p.rows()) != labels.size())
    throw std::invalid_argument("restrict_matrix: label count mismatch");
  Eigen::MatrixXd r = p;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    double moved = 0.0;
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
      if (labels[static_cast<std::size_t>(j)] != labels[static_cast<std::size_t>(i)]) {
        moved += r(i, j);
        r(i, j) = 0.0;
      }
    }
    r(i, i) += moved;
  }
  return r;
}

Eigen::MatrixXd cell_submatrix(const Eigen::MatrixXd& p, std::span<const std::size_t> members) {
  const auto m = static_cast<Eigen::Index>(members.size());
  Eigen::MatrixXd s(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      s(a, b) = p(static_cast<Eigen::Index>(members[static_cast<std::size_t>(a)]),
                  static_cast<Eigen::Index>(members[static_cast<std::size_t>(b)]));
    }
  }
  return s;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& p) {
  check_stochastic(p);
  Eigen::VectorXd pi;
  if (!try_stationary(p, pi)) throw std::invalid_argument("stationary distribution is not unique");
  return pi;
}

double spectral_gap(const Eigen::MatrixXd& p) {
  check_stochastic(p);
  const Eigen::Index n = p.rows();
  if (n == 1) return 1.0;
  double slem = 0.0;
  Eigen::VectorXd pi;
  bool reversible = try_stationary(p, pi);
  if (reversible) {
    for (Eigen::Index i = 0; i < n && reversible; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (std::abs(pi(i) * p(i, j) - pi(j) * p(j, i)) > 1e-10) {
          reversible = false;
          break;
        }
      }
    }
  }
  if (reversible) {
    const Eigen::VectorXd s = pi.cwiseSqrt();
    Eigen::MatrixXd a = s.asDiagonal() * p * s.cwiseInverse().asDiagonal();
    a = 0.5 * (a + a.transpose()).eval();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd& ev = es.eigenvalues();  // ascending; ev(n-1) is 1
    slem = std::max(std::abs(ev(0)), std::abs(ev(n - 2)));
  } else {
    const Eigen::EigenSolver<Eigen::MatrixXd> es(p, false);
    std::vector<double> mod;
    for (Eigen::Index i = 0; i < n; ++i) mod.push_back(std::abs(es.eigenvalues()(i)));
    std::sort(mod.begin(), mod.end(), std::greater<>());
    slem = mod[1];
  }
  return std::clamp(1.0 - slem, 0.0, 1.0);
}

long mixing_time_bound(double gap, double epsilon, double warmness) {
  if (!(gap > 0.0) || gap > 1.0)
    throw std::invalid_argument("mixing_time_bound: gap must lie in (0,1]; a zero gap means no bound");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("mixing_time_bound: epsilon must lie in (0,1)");
  if (!(warmness >= 1.0)) throw std::invalid_argument("mixing_time_bound: warmness must be at least 1");
  const double value = (std::log(2.0 / epsilon) + std::log(warmness - 1.0)) / gap;
  if (!(value > 1.0)) return 1;
  return static_cast<long>(std::ceil(value));
}

}  // namespace psmc
