#include "psmc/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "psmc/kernels.hpp"
#include "psmc/numeric.hpp"
#include "psmc/rng.hpp"

namespace psmc {

namespace {

constexpr double gamma_pi_floor = 1e-300;

void require_positive(double x, const char* what) {
  if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument(std::string(what) + " must be positive and finite");
}

std::uint64_t floor_plus_one(double value) {
  if (!std::isfinite(value) || value >= 1.8e19) throw std::overflow_error("bound exceeds the 64-bit range");
  return static_cast<std::uint64_t>(std::floor(std::max(value, 0.0))) + 1;
}

void validate_table(const CellMassTable& masses) {
  if (masses.empty() || masses.front().empty()) throw std::invalid_argument("mass table is empty");
  const std::size_t p = masses.front().size();
  for (const auto& row : masses) {
    if (row.size() != p) throw std::invalid_argument("mass table rows differ in length");
    double sum = 0.0;
    for (double m : row) {
      if (!(m > 0.0) || m > 1.0) throw std::invalid_argument("mass table entry outside (0, 1]");
      sum += m;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("mass table row does not sum to one");
  }
}

}  // namespace

double lambda_of(double epsilon, std::size_t stages) {
  if (!(epsilon > 0.0 && epsilon <= 0.5)) throw std::invalid_argument("epsilon must lie in (0, 1/2]");
  if (stages == 0) throw std::invalid_argument("V must be at least 1");
  return epsilon / (24.0 * static_cast<double>(stages));
}

double phi(double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw std::invalid_argument("lambda must lie in [0, 1)");
  return (1.0 + lambda) / (1.0 - lambda);
}

bool phi_power_ok(double lambda, std::size_t v, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  const double f = phi(lambda);
  const double lo = std::pow(f, static_cast<double>(v));
  const double hi = std::pow(f, 2.0 * static_cast<double>(v));
  const double cap = (1.0 + epsilon) / (1.0 - epsilon);
  return lo <= hi && hi < cap;
}

ParticleBound particle_bound(const BoundInputs& in) {
  if (!(in.epsilon > 0.0 && in.epsilon <= 0.5)) throw std::invalid_argument("epsilon must lie in (0, 1/2]");
  if (in.stages == 0) throw std::invalid_argument("V must be at least 1");
  if (in.cells == 0) throw std::invalid_argument("p must be at least 1");
  require_positive(in.W, "W");
  require_positive(in.Z, "Z");
  if (!(in.mu_star > 0.0 && in.mu_star <= 1.0)) throw std::invalid_argument("mu* must lie in (0, 1]");

  const double v = static_cast<double>(in.stages);
  const double p = static_cast<double>(in.cells);
  const double ratio = v * in.W * in.Z / in.mu_star;
  ParticleBound out;
  out.resampling_term = 3456.0 * ratio * ratio * std::log(64.0 * v * p / in.mu_star);
  out.cell_count_term = p * p * std::log(1024.0 * p * p);
  out.value = std::max(out.resampling_term, out.cell_count_term) / (in.epsilon * in.epsilon);
  out.particles = floor_plus_one(out.value);
  out.mutation_accuracy = in.mu_star / (16.0 * static_cast<double>(out.particles) * v);
  out.warmness = 7.0;
  return out;
}

std::uint64_t gap_based_t_bound(std::uint64_t particles, std::size_t stages, double gamma, double pi_star,
                                double min_gap) {
  if (particles == 0 || stages == 0) throw std::invalid_argument("N and V must be at least 1");
  if (!(min_gap > 0.0 && min_gap <= 1.0)) throw std::invalid_argument("min gap must lie in (0, 1]");
  if (!(gamma > 0.0 && gamma <= 1.0) || !(pi_star > 0.0 && pi_star <= 1.0))
    throw std::invalid_argument("gamma and pi* must lie in (0, 1]");
  if (gamma * pi_star < gamma_pi_floor) throw std::invalid_argument("gamma * pi* below 1e-300");
  const double nv = static_cast<double>(particles) * static_cast<double>(stages);
  return floor_plus_one(std::log(288.0 * nv / (gamma * pi_star)) / min_gap);
}

std::uint64_t warm_t_bound(const ParticleBound& bound, double min_gap) {
  return static_cast<std::uint64_t>(mixing_time_bound(min_gap, bound.mutation_accuracy, bound.warmness));
}

double persistence(const CellMassTable& masses) {
  validate_table(masses);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < masses.front().size(); ++j) {
    double prod = 1.0;
    for (std::size_t v = 1; v < masses.size(); ++v) prod *= std::min(1.0, masses[v - 1][j] / masses[v][j]);
    best = std::min(best, prod);
  }
  return best;
}

double mu_star(const CellMassTable& masses) {
  validate_table(masses);
  double m = 1.0;
  for (const auto& row : masses) m = std::min(m, *std::min_element(row.begin(), row.end()));
  return m;
}

double pi_star(const CellMassTable& masses) {
  validate_table(masses);
  return *std::min_element(masses.back().begin(), masses.back().end());
}

double overlap(const std::vector<std::vector<double>>& stage_masses, std::span<const int> labels) {
  if (stage_masses.size() < 2) throw std::invalid_argument("overlap needs at least two stages");
  int cells = 0;
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("negative cell label");
    cells = std::max(cells, l + 1);
  }
  for (const auto& m : stage_masses) {
    if (m.size() != labels.size()) throw std::invalid_argument("mass vector and labels differ in length");
  }
  const auto p = static_cast<std::size_t>(cells);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v + 1 < stage_masses.size(); ++v) {
    std::vector<double> common(p, 0.0), a(p, 0.0), b(p, 0.0);
    for (std::size_t k = 0; k < labels.size(); ++k) {
      const auto j = static_cast<std::size_t>(labels[k]);
      common[j] += std::min(stage_masses[v][k], stage_masses[v + 1][k]);
      a[j] += stage_masses[v][k];
      b[j] += stage_masses[v + 1][k];
    }
    for (std::size_t j = 0; j < p; ++j) {
      const double denom = std::max(a[j], b[j]);
      if (!(denom > 0.0)) throw std::invalid_argument("overlap: empty cell");
      best = std::min(best, common[j] / denom);
    }
  }
  return best;
}

double overlap(const DiscreteSpace& space) {
  if (space.stages() == 0) return 1.0;
  std::vector<std::vector<double>> m;
  for (std::size_t v = 0; v <= space.stages(); ++v) m.push_back(space.masses(v));
  return overlap(m, space.labels());
}

double overlap_lower_bound(double zw, double gamma, double pi_star) {
  require_positive(zw, "ZW");
  require_positive(gamma, "gamma");
  require_positive(pi_star, "pi*");
  return std::min(1.0, 1.0 / zw) * gamma * pi_star;
}

OverlapEstimate overlap_monte_carlo(const AnnealedFamily& family, std::size_t draws, std::uint64_t seed) {
  constexpr std::size_t batches = 20;
  if (draws < batches * 10) throw std::invalid_argument("overlap estimate needs at least 200 draws");
  const TargetModel& model = family.model();
  const auto p = static_cast<std::size_t>(family.partition().cell_count());
  const std::size_t per_batch = draws / batches;
  const std::size_t n = per_batch * batches;

  OverlapEstimate best;
  best.value = std::numeric_limits<double>::infinity();
  if (family.stages() == 0) return OverlapEstimate{1.0, 0.0, 0, 0};

  State x(family.dimension());
  std::vector<double> log_r(n);
  std::vector<int> cell(n);
  for (std::size_t v = 0; v < family.stages(); ++v) {
    if (!model.can_sample_exactly(family.beta(v)))
      throw std::invalid_argument("overlap estimate needs exact draws from every mu_v");
    const double dbeta = family.beta(v + 1) - family.beta(v);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      Stream rng(seed, static_cast<std::uint32_t>(v), Phase::verify, static_cast<std::uint32_t>(i));
      model.sample_tempered(family.beta(v), x, rng);
      log_r[i] = dbeta * model.log_density(x);
      cell[i] = family.partition().classify(x);
      top = std::max(top, log_r[i]);
    }

    // delta_{v,j} from the draws in [lo, hi).
    auto statistic = [&](std::size_t lo, std::size_t hi, std::vector<double>& out) {
      const double m = static_cast<double>(hi - lo);
      double c = 0.0;
      for (std::size_t i = lo; i < hi; ++i) c += std::exp(log_r[i] - top);
      c /= m;
      std::vector<double> in_a(p, 0.0), in_b(p, 0.0), common(p, 0.0);
      for (std::size_t i = lo; i < hi; ++i) {
        const auto j = static_cast<std::size_t>(cell[i]);
        const double r = std::exp(log_r[i] - top) / c;
        in_a[j] += 1.0;
        in_b[j] += r;
        common[j] += std::min(1.0, r);
      }
      out.assign(p, 0.0);
      for (std::size_t j = 0; j < p; ++j) {
        const double denom = std::max(in_a[j], in_b[j]);
        out[j] = denom > 0.0 ? common[j] / denom : 0.0;
      }
    };

    std::vector<double> whole;
    statistic(0, n, whole);
    std::vector<double> sum(p, 0.0), sum_sq(p, 0.0), part;
    for (std::size_t b = 0; b < batches; ++b) {
      statistic(b * per_batch, (b + 1) * per_batch, part);
      for (std::size_t j = 0; j < p; ++j) {
        sum[j] += part[j];
        sum_sq[j] += part[j] * part[j];
      }
    }
    const double nb = static_cast<double>(batches);
    for (std::size_t j = 0; j < p; ++j) {
      if (whole[j] < best.value) {
        const double mean = sum[j] / nb;
        const double var = std::max(0.0, (sum_sq[j] - nb * mean * mean) / (nb - 1.0));
        best = OverlapEstimate{whole[j], std::sqrt(var / nb), v, static_cast<int>(j)};
      }
    }
  }
  return best;
}

double exact_log_partition(const TargetModel& model, double beta) {
  if (const auto* g = dynamic_cast<const GaussianMixtureModel*>(&model)) {
    if (!(beta > 0.0)) throw std::invalid_argument("Gaussian partition function needs beta > 0");
    return AnalyticCatalog::gaussian_mixture(g->params(), {1.0}).log_partition(beta);
  }
  if (const auto* s = dynamic_cast<const IsingModel*>(&model)) {
    return ising_log_partition(s->dimension(), s->alpha(), beta);
  }
  if (const auto* d = dynamic_cast<const DiscreteModel*>(&model)) {
    std::vector<double> lm;
    lm.reserve(d->log_q().size());
    for (double l : d->log_q()) lm.push_back(beta * l);
    return log_sum_exp(lm);
  }
  throw std::invalid_argument("no exact partition function for model " + model.name());
}

DensityRatioBounds density_ratio_bounds(const AnnealedFamily& family) {
  if (family.stages() == 0) return {};
  const double sup = family.model().log_density_sup();
  double log_w = -std::numeric_limits<double>::infinity();
  double log_z = -std::numeric_limits<double>::infinity();
  double prev = exact_log_partition(family.model(), family.beta(0));
  for (std::size_t v = 1; v <= family.stages(); ++v) {
    const double cur = exact_log_partition(family.model(), family.beta(v));
    log_w = std::max(log_w, (family.beta(v) - family.beta(v - 1)) * sup);
    log_z = std::max(log_z, prev - cur);
    prev = cur;
  }
  return {std::exp(log_w), std::exp(log_z)};
}

CellMassTable exact_cell_masses(const AnnealedFamily& family) {
  const std::vector<double> betas(family.betas().begin(), family.betas().end());
  if (const auto* g = dynamic_cast<const GaussianMixtureModel*>(&family.model()))
    return AnalyticCatalog::gaussian_mixture(g->params(), betas).cell_mass_table();
  if (const auto* s = dynamic_cast<const IsingModel*>(&family.model()))
    return AnalyticCatalog::ising(s->dimension(), s->alpha(), betas).cell_mass_table();
  return DiscreteSpace(family).cell_mass_table();
}

}  // namespace psmc
