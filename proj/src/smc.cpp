#include "psmc/smc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <utility>

#include "psmc/particle_ops.hpp"
#include "psmc/rng.hpp"

namespace psmc {

std::vector<std::size_t> ParticleSystem::occupancy(int cell_count) const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(cell_count), 0);
  for (int c : cells) ++counts[static_cast<std::size_t>(c)];
  return counts;
}

ParticleSystem initialize(const RunConfig& config) {
  if (config.particles == 0) throw std::invalid_argument("particle count must be at least 1");
  ParticleSystem sys;
  sys.states = StateMatrix(config.particles, config.family.dimension());
  if (config.engine == Engine::serial) {
    serial::initialize(config.family, config.seed, sys.states, sys.cells);
  } else {
    omp::initialize(config.family, config.seed, sys.states, sys.cells, config.threads);
  }
  return sys;
}

StepDiagnostics resample(ParticleSystem& system, std::span<const double> log_w, int cell_count,
                         std::uint64_t seed, std::size_t stage, std::vector<std::size_t>* ancestors) {
  const std::size_t n = system.size();
  if (log_w.size() != n) throw std::invalid_argument("resample: one log weight per particle required");
  if (n == 0) throw std::invalid_argument("resample: empty particle system");

  double top = -std::numeric_limits<double>::infinity();
  for (double lw : log_w) {
    if (std::isnan(lw)) throw WeightCollapse(stage);
    top = std::max(top, lw);
  }
  if (!std::isfinite(top)) throw WeightCollapse(stage);

  const auto p = static_cast<std::size_t>(cell_count);
  std::vector<double> cdf(n);
  std::vector<double> cell_sum(p, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::exp(log_w[i] - top);
    cell_sum[static_cast<std::size_t>(system.cells[i])] += w;
    total += w;
    cdf[i] = total;
  }
  if (!(total > 0.0) || !std::isfinite(total)) throw WeightCollapse(stage);

  StepDiagnostics diag;
  diag.stage = stage;
  diag.occupancy_before = system.occupancy(cell_count);
  const double scale = std::exp(top) / static_cast<double>(n);
  for (std::size_t j = 0; j < p; ++j) {
    diag.cell_weight_sums.push_back(cell_sum[j] * scale);
    diag.resample_probs.push_back(cell_sum[j] / total);
  }
  diag.log_z_increment = top + std::log(total / static_cast<double>(n));

  std::vector<std::size_t> source(n);
  for (std::size_t i = 0; i < n; ++i) {
    Stream rng(seed, static_cast<std::uint32_t>(stage), Phase::resample, static_cast<std::uint32_t>(i));
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    source[i] = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), n - 1);
  }

  StateMatrix next(n, system.states.dim());
  std::vector<int> next_cells(n);
  for (std::size_t i = 0; i < n; ++i) {
    const StateView from = std::as_const(system.states).row(source[i]);
    std::copy(from.begin(), from.end(), next.row(i).begin());
    next_cells[i] = system.cells[source[i]];
  }
  system.states = std::move(next);
  system.cells = std::move(next_cells);
  system.stage = stage;
  diag.occupancy_after = system.occupancy(cell_count);
  if (ancestors) *ancestors = std::move(source);
  return diag;
}

void mutate(ParticleSystem& system, const RestrictedKernel& kernel, std::size_t steps, std::uint64_t seed,
            Engine engine, int threads) {
  if (engine == Engine::serial) {
    serial::mutate(kernel, steps, seed, system.stage, system.states, system.cells);
  } else {
    omp::mutate(kernel, steps, seed, system.stage, system.states, system.cells, threads);
  }
}

RunReport run(const RunConfig& config, const StageObserver& observer, const StageObserver& after_resample) {
  using Clock = std::chrono::steady_clock;
  const AnnealedFamily& family = config.family;
  const int p = family.partition().cell_count();

  RunReport report;
  report.seed = config.seed;
  report.final = initialize(config);
  report.initial_occupancy = report.final.occupancy(p);

  ParticleSystem& sys = report.final;
  std::vector<double> lw;
  for (std::size_t v = 1; v <= family.stages(); ++v) {
    const auto start = Clock::now();
    if (config.engine == Engine::serial) {
      serial::log_weights(family, v, sys.states, lw);
    } else {
      omp::log_weights(family, v, sys.states, lw, config.threads);
    }
    StepDiagnostics diag = resample(sys, lw, p, config.seed, v);
    if (after_resample) after_resample(sys, diag);

    if (config.steps > 0) {
      MarkovKernel base = make_kernel(config.kernel, family, v);
      if (config.restricted) {
        mutate(sys, RestrictedKernel(std::move(base), family.model_ptr()), config.steps, config.seed, config.engine,
               config.threads);
      } else if (config.engine == Engine::serial) {
        serial::mutate_free(base, family.partition(), config.steps, config.seed, v, sys.states, sys.cells);
      } else {
        omp::mutate_free(base, family.partition(), config.steps, config.seed, v, sys.states, sys.cells,
                         config.threads);
      }
    }
    diag.occupancy_after = sys.occupancy(p);
    report.log_z += diag.log_z_increment;
    report.stage_seconds.push_back(std::chrono::duration<double>(Clock::now() - start).count());
    if (observer) observer(sys, diag);
    report.stages.push_back(std::move(diag));
  }
  return report;
}

double estimate(const RunReport& report, const std::function<double(StateView)>& f) {
  const StateMatrix& x = report.final.states;
  if (x.rows() == 0) throw std::invalid_argument("estimate: no particles");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double y = f(x.row(i));
    if (!(std::abs(y) <= 1.0)) throw std::domain_error("estimate: |f| exceeds 1 on a particle");
    sum += y;
  }
  return std::clamp(sum / static_cast<double>(x.rows()), -1.0, 1.0);
}

double estimate_log_partition(const RunReport& report) {
  double s = 0.0;
  for (const StepDiagnostics& d : report.stages) s += d.log_z_increment;
  return s;
}

std::vector<double> cell_tracking_error(const RunReport& report, const CellMassTable& masses) {
  if (masses.size() != report.stages.size() + 1)
    throw std::invalid_argument("cell_tracking_error: mass table does not cover every stage");
  std::vector<double> out;
  for (const StepDiagnostics& d : report.stages) {
    const auto& mu = masses.at(d.stage);
    if (mu.size() != d.resample_probs.size()) throw std::invalid_argument("cell_tracking_error: cell count mismatch");
    double worst = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) worst = std::max(worst, std::abs(d.resample_probs[j] - mu[j]));
    out.push_back(worst);
  }
  return out;
}

bool resampling_sandwich_holds(const RunReport& report, const CellMassTable& masses, double phi) {
  if (masses.size() != report.stages.size() + 1)
    throw std::invalid_argument("sandwich check: mass table does not cover every stage");
  for (const StepDiagnostics& d : report.stages) {
    const double f = std::pow(phi, static_cast<double>(d.stage));
    const auto& mu = masses.at(d.stage);
    for (std::size_t j = 0; j < mu.size(); ++j) {
      if (d.resample_probs[j] < mu[j] / f || d.resample_probs[j] > mu[j] * f) return false;
    }
  }
  return true;
}

}  // namespace psmc
