#include "psmc/verification.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "psmc/kernels.hpp"
#include "psmc/particle_ops.hpp"

namespace psmc {

namespace {

void require_normalized(std::span<const double> p, const char* what) {
  double s = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative or NaN probability");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument(std::string(what) + ": probabilities do not sum to one");
}

std::vector<double> cumulative(std::span<const double> w) {
  std::vector<double> cdf(w.size());
  std::partial_sum(w.begin(), w.end(), cdf.begin());
  return cdf;
}

Eigen::MatrixXd matrix_power(Eigen::MatrixXd base, std::size_t exponent) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(base.rows(), base.cols());
  while (exponent > 0) {
    if (exponent & 1U) out = out * base;
    base = base * base;
    exponent >>= 1U;
  }
  return out;
}

}  // namespace

ExactStage exact_annealed(const DiscreteSpace& space, std::size_t v) {
  ExactStage out;
  out.log_z = space.log_partition(v);
  out.cell_probs = space.cell_mass_table().at(v);
  for (int c = 0; c < space.cell_count(); ++c) out.conditionals.push_back(space.conditional(v, c));
  return out;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_distance: supports differ in size");
  require_normalized(p, "tv_distance");
  require_normalized(q, "tv_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return std::min(1.0, 0.5 * s);
}

CouplingMap::CouplingMap(std::vector<double> f, std::vector<double> g, int cell) : cell_(cell) {
  if (f.size() != g.size() || f.empty()) throw std::invalid_argument("coupling map: mismatched supports");
  require_normalized(f, "coupling map");
  require_normalized(g, "coupling map");
  const std::size_t n = f.size();
  std::vector<double> h(n), rf(n), rg(n);
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = std::min(f[i], g[i]);
    rf[i] = f[i] - h[i];
    rg[i] = g[i] - h[i];
  }
  common_cdf_ = cumulative(h);
  f_cdf_ = cumulative(rf);
  g_cdf_ = cumulative(rg);
  a_ = std::min(1.0, common_cdf_.back());
}

std::size_t CouplingMap::pick(const std::vector<double>& cdf, double u) {
  const double target = u * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
  std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
  // Skip zero-mass entries that upper_bound can land on at the top end.
  while (k > 0 && cdf[k] == cdf[k - 1]) --k;
  return k;
}

CoupledPair CouplingMap::draw(Stream& rng) const {
  CoupledPair out;
  out.cell = cell_;
  const bool residual_empty = !(f_cdf_.back() > 0.0) || !(g_cdf_.back() > 0.0);
  if (residual_empty || rng.uniform() < a_) {
    out.x = out.x_bar = pick(common_cdf_, rng.uniform());
    out.equal = true;
    return out;
  }
  out.x = pick(f_cdf_, rng.uniform());
  out.x_bar = pick(g_cdf_, rng.uniform());
  out.equal = out.x == out.x_bar;
  return out;
}

CoupledPair coupling_map(std::span<const double> f, std::span<const double> g, Stream& rng, int cell) {
  return CouplingMap({f.begin(), f.end()}, {g.begin(), g.end()}, cell).draw(rng);
}

double warm_start_tv(const Eigen::MatrixXd& kernel_power, std::span<const double> target, double M) {
  const auto n = static_cast<std::size_t>(kernel_power.rows());
  if (n == 0 || kernel_power.cols() != kernel_power.rows() || target.size() != n)
    throw std::invalid_argument("warm_start_tv: dimension mismatch");
  if (n > warm_mixing_max_states) throw std::invalid_argument("warm_start_tv: cell larger than 16 states");
  if (!(M >= 1.0)) throw std::invalid_argument("warm_start_tv: warmness must be at least 1");

  std::vector<double> g(n, 0.0), cap(n);
  for (std::size_t k = 0; k < n; ++k) cap[k] = M * target[k];
  std::vector<std::size_t> order(n);
  double mass_b = 0.0;
  double best = 0.0;
  std::uint32_t gray = 0;
  for (std::uint32_t i = 1; i < (1U << n); ++i) {
    // Gray-code walk: exactly one state enters or leaves B per iteration.
    const std::uint32_t next = i ^ (i >> 1U);
    const auto col = static_cast<std::size_t>(std::countr_zero(next ^ gray));
    const double sign = (next >> col) & 1U ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) g[k] += sign * kernel_power(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(col));
    mass_b += sign * target[col];
    gray = next;

    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g[a] > g[b]; });
    double left = 1.0, value = 0.0;
    for (std::size_t k : order) {
      const double take = std::min(left, cap[k]);
      value += take * g[k];
      left -= take;
      if (left <= 0.0) break;
    }
    best = std::max(best, value - mass_b);
  }
  return best;
}

WarmMixingResult verify_warm_mixing(const Eigen::MatrixXd& cell_kernel, std::span<const double> target, double M,
                                    double epsilon, std::size_t max_steps) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("warm mixing: epsilon must lie in (0, 1)");
  require_normalized(target, "warm mixing");
  WarmMixingResult out;
  out.gap = spectral_gap(cell_kernel);
  out.bound = out.gap > 0.0 ? mixing_time_bound(out.gap, epsilon, M) : std::numeric_limits<long>::max();

  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(cell_kernel.rows(), cell_kernel.cols());
  for (std::size_t t = 0; t <= max_steps; ++t) {
    if (warm_start_tv(power, target, M) <= epsilon) {
      out.tau = t;
      out.within_bound = static_cast<long>(t) <= out.bound;
      return out;
    }
    power = power * cell_kernel;
  }
  throw std::runtime_error("warm mixing: no convergence within the step limit");
}

WarmMixingResult verify_warm_mixing(const DiscreteSpace& space, const Eigen::MatrixXd& restricted, std::size_t v,
                                    int cell, double M, double epsilon) {
  const auto members = space.cell_members(cell);
  return verify_warm_mixing(cell_submatrix(restricted, members), space.conditional(v, cell), M, epsilon);
}

bool WarmnessReport::below(double m) const {
  return std::all_of(stages.begin(), stages.end(),
                     [m](const StageWarmness& s) { return !s.unvisited && s.max_ratio < m; });
}

WarmnessReport verify_local_warmness(const DiscreteSpace& space, const RunConfig& config, std::size_t replicates) {
  if (replicates < 2) throw std::invalid_argument("local warmness needs at least two replicates");
  const std::size_t n = space.size();
  const std::size_t stages = space.stages();
  // counts[r][(v-1) * n + k]: particles on state k right after resampling at stage v.
  std::vector<std::vector<double>> counts;
  WarmnessReport report;
  report.replicates = replicates;
  std::size_t extinct = 0;

  for (std::size_t r = 0; r < replicates; ++r) {
    RunConfig cfg = config;
    cfg.seed = replicate_seed(config.seed, r);
    std::vector<double> c(stages * n, 0.0);
    bool lost_cell = false;
    auto record = [&](const ParticleSystem& sys, const StepDiagnostics& d) {
      for (std::size_t i = 0; i < sys.size(); ++i) {
        const std::size_t k = space.index_of(std::as_const(sys.states).row(i));
        if (k == n) throw std::logic_error("local warmness: particle outside the enumerated space");
        c[(d.stage - 1) * n + k] += 1.0;
      }
      for (std::size_t occ : d.occupancy_after) lost_cell = lost_cell || occ == 0;
    };
    try {
      run(cfg, {}, record);
    } catch (const WeightCollapse&) {
      ++report.collapses;
      continue;
    }
    if (lost_cell) ++extinct;
    counts.push_back(std::move(c));
  }
  report.extinction_rate = static_cast<double>(extinct) / static_cast<double>(replicates);
  const double reps = static_cast<double>(counts.size());

  for (std::size_t v = 1; v <= stages; ++v) {
    StageWarmness sw;
    sw.stage = v;
    const auto mu = space.masses(v);
    for (int cell = 0; cell < space.cell_count(); ++cell) {
      const auto members = space.cell_members(cell);
      double mu_cell = 0.0;
      for (std::size_t k : members) mu_cell += mu[k];
      std::vector<double> b(counts.size(), 0.0);
      for (std::size_t r = 0; r < counts.size(); ++r)
        for (std::size_t k : members) b[r] += counts[r][(v - 1) * n + k];
      const double sum_b = std::accumulate(b.begin(), b.end(), 0.0);
      if (!(sum_b > 0.0)) {
        sw.unvisited = true;
        sw.max_ratio = std::numeric_limits<double>::infinity();
        sw.cell = cell;
        continue;
      }
      for (std::size_t k : members) {
        double sum_a = 0.0;
        for (const auto& c : counts) sum_a += c[(v - 1) * n + k];
        const double share = sum_a / sum_b;
        double ss = 0.0;
        for (std::size_t r = 0; r < counts.size(); ++r) {
          const double e = counts[r][(v - 1) * n + k] - share * b[r];
          ss += e * e;
        }
        const double se_share = reps > 1 ? std::sqrt(ss / (reps - 1.0) / reps) / (sum_b / reps) : 0.0;
        const double target = mu[k] / mu_cell;
        const double ratio = share / target;
        if (!sw.unvisited && ratio > sw.max_ratio) {
          sw.max_ratio = ratio;
          sw.standard_error = se_share / target;
          sw.cell = cell;
          sw.state = k;
        }
      }
    }
    report.stages.push_back(sw);
  }
  return report;
}

bool IdentityReport::pass(double z_max) const {
  return std::all_of(strata.begin(), strata.end(),
                     [z_max](const IdentityStratum& s) { return s.skipped || std::abs(s.z) <= z_max; });
}

IdentityReport verify_cond_exp_identity(const DiscreteSpace& space, const RunConfig& config, std::size_t replicates,
                                        std::size_t strata) {
  if (strata == 0) throw std::invalid_argument("identity check needs at least one stratum");
  constexpr std::size_t min_stratum = 30;
  const std::size_t stages = space.stages();
  const auto p = static_cast<std::size_t>(space.cell_count());
  const CellMassTable table = space.cell_mass_table();

  // p_hat[r][v][j] for v = 0..V-1 and w_hat[r][v][j] = w_hat_{v+1}^j.
  std::vector<std::vector<std::vector<double>>> p_hat, w_hat;
  for (std::size_t r = 0; r < replicates; ++r) {
    RunConfig cfg = config;
    cfg.seed = replicate_seed(config.seed, r);
    RunReport rep;
    try {
      rep = run(cfg);
    } catch (const WeightCollapse&) {
      continue;
    }
    const double n = static_cast<double>(cfg.particles);
    std::vector<std::vector<double>> ph(stages), wh(stages);
    for (std::size_t v = 0; v < stages; ++v) {
      for (std::size_t j = 0; j < p; ++j) {
        ph[v].push_back(v == 0 ? static_cast<double>(rep.initial_occupancy[j]) / n
                               : rep.stages[v - 1].resample_probs[j]);
        wh[v].push_back(rep.stages[v].cell_weight_sums[j]);
      }
    }
    p_hat.push_back(std::move(ph));
    w_hat.push_back(std::move(wh));
  }

  IdentityReport report;
  const std::size_t reps = p_hat.size();
  for (std::size_t v = 0; v < stages; ++v) {
    const double z_ratio = std::exp(space.log_partition(v + 1) - space.log_partition(v));
    for (std::size_t j = 0; j < p; ++j) {
      const double factor = z_ratio * table[v + 1][j] / table[v][j];
      std::vector<std::size_t> order(reps);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return p_hat[a][v][j] < p_hat[b][v][j]; });
      for (std::size_t s = 0; s < strata; ++s) {
        IdentityStratum st;
        st.stage = v;
        st.cell = static_cast<int>(j);
        st.stratum = s;
        const std::size_t lo = s * reps / strata, hi = (s + 1) * reps / strata;
        st.count = hi - lo;
        if (st.count < min_stratum) {
          st.skipped = true;
          st.note = "stratum has " + std::to_string(st.count) + " replicates, below 30";
          report.strata.push_back(st);
          continue;
        }
        double sum_d = 0.0, sum_d2 = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
          const std::size_t r = order[i];
          const double rhs = factor * p_hat[r][v][j];
          st.mean_lhs += w_hat[r][v][j];
          st.mean_rhs += rhs;
          const double d = w_hat[r][v][j] - rhs;
          sum_d += d;
          sum_d2 += d * d;
        }
        const double m = static_cast<double>(st.count);
        st.mean_lhs /= m;
        st.mean_rhs /= m;
        const double mean_d = sum_d / m;
        const double var = std::max(0.0, (sum_d2 - m * mean_d * mean_d) / (m - 1.0));
        st.standard_error = std::sqrt(var / m);
        st.z = st.standard_error > 0.0 ? mean_d / st.standard_error
                                       : (std::abs(mean_d) < 1e-14 ? 0.0 : std::numeric_limits<double>::infinity());
        report.strata.push_back(st);
      }
    }
  }
  return report;
}

ConcentrationReport verify_concentration(double a, double b, std::size_t particles, double lambda,
                                         std::size_t replicates, std::uint64_t seed) {
  if (!(b > a)) throw std::invalid_argument("concentration: range must satisfy a < b");
  if (particles == 0 || replicates == 0) throw std::invalid_argument("concentration: N and R must be positive");
  const AnnealedFamily family = DiscreteSpace::reference_family();
  RunConfig cfg{family};
  cfg.particles = particles;
  cfg.seed = seed;
  cfg.engine = Engine::serial;
  const ParticleSystem parents = initialize(cfg);
  std::vector<double> lw;
  serial::log_weights(family, 1, parents.states, lw);

  ConcentrationReport out;
  out.replicates = replicates;
  out.bound = 4.0 * std::exp(-static_cast<double>(particles) * lambda * lambda / (2.0 * (b - a) * (b - a)));
  const double n = static_cast<double>(particles);
  for (std::size_t r = 0; r < replicates; ++r) {
    ParticleSystem sys = parents;
    const StepDiagnostics d = resample(sys, lw, 2, replicate_seed(seed, r), 1);
    const double mean = a + (b - a) * d.resample_probs[0];
    const double f_bar = a + (b - a) * static_cast<double>(d.occupancy_after[0]) / n;
    if (std::abs(f_bar - mean) > lambda) ++out.exceedances;
  }
  const double reps = static_cast<double>(replicates);
  out.rate = static_cast<double>(out.exceedances) / reps;
  const double q = std::min(1.0, out.bound);
  out.standard_error = std::sqrt(q * (1.0 - q) / reps);
  out.pass = out.rate <= out.bound + 3.0 * out.standard_error;
  return out;
}

std::vector<std::uint64_t> multinomial(std::uint64_t n, std::span<const double> weights, Stream& rng) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("multinomial: invalid weight");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("multinomial: weights sum to zero");
  std::vector<std::uint64_t> out(weights.size(), 0);
  std::uint64_t left = n;
  double rest = total;
  for (std::size_t k = 0; k < weights.size() && left > 0; ++k) {
    if (k + 1 == weights.size() || weights[k] >= rest) {
      out[k] = left;
      left = 0;
      break;
    }
    const double prob = std::clamp(weights[k] / rest, 0.0, 1.0);
    std::binomial_distribution<unsigned long long> binom(left, prob);
    out[k] = binom(rng);
    left -= out[k];
    rest -= weights[k];
  }
  return out;
}

std::vector<Eigen::MatrixXd> restricted_kernel_powers(const DiscreteSpace& space, const KernelSpec& spec,
                                                      std::size_t steps) {
  std::vector<Eigen::MatrixXd> out;
  const AnnealedFamily& family = space.family();
  for (std::size_t v = 1; v <= family.stages(); ++v) {
    const RestrictedKernel k(make_kernel(spec, family, v), family.model_ptr());
    out.push_back(matrix_power(transition_matrix(k, space), steps));
  }
  return out;
}

CountRun simulate_counts(const DiscreteSpace& space, const std::vector<Eigen::MatrixXd>& stage_kernels,
                         std::uint64_t particles, std::uint64_t seed) {
  const std::size_t n = space.size();
  const std::size_t stages = space.stages();
  const auto p = static_cast<std::size_t>(space.cell_count());
  if (particles == 0) throw std::invalid_argument("simulate_counts: particle count must be at least 1");
  if (stage_kernels.size() != stages) throw std::invalid_argument("simulate_counts: one kernel per stage required");
  const AnnealedFamily& family = space.family();

  auto occupancy = [&](const std::vector<std::uint64_t>& c) {
    std::vector<std::size_t> occ(p, 0);
    for (std::size_t k = 0; k < n; ++k) occ[static_cast<std::size_t>(space.label(k))] += c[k];
    return occ;
  };

  CountRun out;
  out.report.seed = seed;
  Stream init(seed, 0, Phase::initialize, 0);
  std::vector<std::uint64_t> counts = multinomial(particles, space.masses(0), init);
  out.report.initial_occupancy = occupancy(counts);
  const double total_n = static_cast<double>(particles);

  for (std::size_t v = 1; v <= stages; ++v) {
    const double dbeta = family.beta(v) - family.beta(v - 1);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k)
      if (counts[k] > 0) top = std::max(top, dbeta * space.log_q(k));
    std::vector<double> mass(n, 0.0), cell_sum(p, 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      mass[k] = static_cast<double>(counts[k]) * std::exp(dbeta * space.log_q(k) - top);
      cell_sum[static_cast<std::size_t>(space.label(k))] += mass[k];
      total += mass[k];
    }
    StepDiagnostics d;
    d.stage = v;
    d.occupancy_before = occupancy(counts);
    for (std::size_t j = 0; j < p; ++j) {
      d.cell_weight_sums.push_back(cell_sum[j] * std::exp(top) / total_n);
      d.resample_probs.push_back(cell_sum[j] / total);
    }
    d.log_z_increment = top + std::log(total / total_n);

    Stream rs(seed, static_cast<std::uint32_t>(v), Phase::resample, 0);
    counts = multinomial(particles, mass, rs);

    const Eigen::MatrixXd& kt = stage_kernels[v - 1];
    if (kt.rows() != static_cast<Eigen::Index>(n) || kt.cols() != static_cast<Eigen::Index>(n))
      throw std::invalid_argument("simulate_counts: kernel dimension mismatch");
    std::vector<std::uint64_t> moved(n, 0);
    std::vector<double> row(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (counts[k] == 0) continue;
      for (std::size_t m = 0; m < n; ++m)
        row[m] = std::max(0.0, kt(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)));
      Stream ms(seed, static_cast<std::uint32_t>(v), Phase::mutate, static_cast<std::uint32_t>(k));
      const auto to = multinomial(counts[k], row, ms);
      for (std::size_t m = 0; m < n; ++m) moved[m] += to[m];
    }
    counts = std::move(moved);
    d.occupancy_after = occupancy(counts);
    out.report.log_z += d.log_z_increment;
    out.report.stages.push_back(std::move(d));
  }
  out.final_counts = std::move(counts);
  return out;
}

}  // namespace psmc
