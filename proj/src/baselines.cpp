#include "psmc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <omp.h>

#include "psmc/rng.hpp"
#include "psmc/smc.hpp"

namespace psmc {

namespace {

std::uint32_t sweep_index(std::size_t sweep) {
  if (sweep > 0xFFFFFFFFull) throw std::overflow_error("sweep index exceeds 32 bits");
  return static_cast<std::uint32_t>(sweep);
}

bool accept(double log_ratio, Stream& rng) {
  if (log_ratio >= 0.0) return true;
  return std::log(rng.uniform_open()) < log_ratio;
}

}  // namespace

double SwapStats::acceptance(std::size_t pair) const {
  const std::size_t n = proposed.at(pair);
  return n == 0 ? 0.0 : static_cast<double>(accepted.at(pair)) / static_cast<double>(n);
}

double swap_log_ratio(const AnnealedFamily& family, std::size_t u, std::size_t w, StateView x_u, StateView x_w) {
  const TargetModel& m = family.model();
  return (family.beta(u) - family.beta(w)) * (m.log_density(x_w) - m.log_density(x_u));
}

ReplicaSystem pt_initialize(const AnnealedFamily& family, std::uint64_t seed, const std::optional<State>& start) {
  const std::size_t levels = family.stages() + 1;
  ReplicaSystem sys;
  sys.chains = StateMatrix(levels, family.dimension());
  sys.cells.resize(levels);
  sys.swaps.proposed.assign(family.stages(), 0);
  sys.swaps.accepted.assign(family.stages(), 0);
  for (std::size_t v = 0; v < levels; ++v) {
    StateSpan x = sys.chains.row(v);
    if (start) {
      if (start->size() != family.dimension()) throw std::invalid_argument("start state has the wrong dimension");
      std::copy(start->begin(), start->end(), x.begin());
    } else {
      if (!family.model().can_sample_exactly(family.beta(v)))
        throw std::invalid_argument("no exact sampler for the initial chains; give a start state");
      Stream rng(seed, static_cast<std::uint32_t>(v), Phase::initialize, 0);
      family.model().sample_tempered(family.beta(v), x, rng);
    }
    sys.cells[v] = family.partition().classify(std::as_const(sys.chains).row(v));
  }
  return sys;
}

void pt_step(ReplicaSystem& system, const AnnealedFamily& family, const std::vector<MarkovKernel>& kernels,
             std::uint64_t seed, int threads, SwapRecord* record) {
  const std::size_t levels = family.stages() + 1;
  if (kernels.size() != levels) throw std::invalid_argument("one kernel per temperature required");
  const std::uint32_t s = sweep_index(system.sweeps);
  const std::size_t d = family.dimension();
  const auto n = static_cast<long>(levels);

#pragma omp parallel num_threads(threads > 0 ? threads : omp_get_max_threads())
  {
    std::vector<double> work(kernels.front().workspace_size(d));
#pragma omp for schedule(static)
    for (long v = 0; v < n; ++v) {
      const auto i = static_cast<std::size_t>(v);
      Stream rng(seed, s, Phase::chain, static_cast<std::uint32_t>(i));
      kernels[i].step(system.chains.row(i), work, rng);
    }
  }
  for (std::size_t v = 0; v < levels; ++v)
    system.cells[v] = family.partition().classify(std::as_const(system.chains).row(v));

  if (levels > 1) {
    Stream rng(seed, s, Phase::swap, 0);
    const auto pair = static_cast<std::size_t>(rng.below(levels - 1));
    const StateMatrix& c = system.chains;
    const double lr = swap_log_ratio(family, pair, pair + 1, c.row(pair), c.row(pair + 1));
    const bool ok = accept(lr, rng);
    ++system.swaps.proposed[pair];
    if (ok) {
      ++system.swaps.accepted[pair];
      StateSpan a = system.chains.row(pair);
      StateSpan b = system.chains.row(pair + 1);
      std::swap_ranges(a.begin(), a.end(), b.begin());
      std::swap(system.cells[pair], system.cells[pair + 1]);
    }
    if (record) *record = SwapRecord{pair, lr, ok};
  }
  ++system.sweeps;
}

void st_step(STState& state, const AnnealedFamily& family, const std::vector<MarkovKernel>& kernels,
             std::uint64_t seed, std::size_t sweep) {
  const std::size_t levels = family.stages() + 1;
  if (kernels.size() != levels || state.log_pseudo_priors.size() != levels)
    throw std::invalid_argument("one kernel and one pseudo-prior per temperature required");
  const std::uint32_t s = sweep_index(sweep);
  Stream rng(seed, s, Phase::chain, 0);
  std::vector<double> work(kernels[state.level].workspace_size(state.x.size()));
  kernels[state.level].step(state.x, work, rng);
  if (levels == 1) return;

  Stream jump(seed, s, Phase::temperature, 0);
  const bool up = jump.uniform() < 0.5;
  if ((up && state.level + 1 == levels) || (!up && state.level == 0)) return;
  const std::size_t to = up ? state.level + 1 : state.level - 1;
  const double lq = family.model().log_density(state.x);
  const double lr = state.log_pseudo_priors[to] - state.log_pseudo_priors[state.level] +
                    (family.beta(to) - family.beta(state.level)) * lq;
  if (accept(lr, jump)) state.level = to;
}

CrossingReport mode_crossing_report(std::span<const int> trace, int cell_count) {
  if (cell_count < 1) throw std::invalid_argument("cell count must be positive");
  CrossingReport out;
  out.occupancy.assign(static_cast<std::size_t>(cell_count), 0.0);
  out.sweeps = trace.size();
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i] < 0 || trace[i] >= cell_count) throw std::invalid_argument("trace label out of range");
    out.occupancy[static_cast<std::size_t>(trace[i])] += 1.0;
    if (i > 0 && trace[i] != trace[i - 1]) ++out.crossings;
  }
  if (!trace.empty()) {
    for (double& o : out.occupancy) o /= static_cast<double>(trace.size());
  }
  if (trace.size() > 1) out.crossings_per_sweep = static_cast<double>(out.crossings) / static_cast<double>(trace.size() - 1);
  return out;
}

std::vector<MarkovKernel> tempering_kernels(const KernelSpec& spec, const AnnealedFamily& family) {
  std::vector<MarkovKernel> out;
  for (std::size_t v = 0; v <= family.stages(); ++v) out.push_back(make_kernel(spec, family, v));
  return out;
}

PTResult run_pt(const TemperingConfig& config, const ReplicaObserver& observer) {
  const AnnealedFamily& family = config.family;
  const auto kernels = tempering_kernels(config.kernel, family);
  PTResult out;
  out.system = pt_initialize(family, config.seed, config.start);
  out.cell_traces.assign(family.stages() + 1, {});
  for (auto& t : out.cell_traces) t.reserve(config.sweeps);
  for (std::size_t s = 0; s < config.sweeps; ++s) {
    pt_step(out.system, family, kernels, config.seed, config.threads);
    for (std::size_t v = 0; v <= family.stages(); ++v) out.cell_traces[v].push_back(out.system.cells[v]);
    if (observer) observer(out.system);
  }
  for (std::size_t p = 0; p < family.stages(); ++p) out.swap_acceptance.push_back(out.system.swaps.acceptance(p));
  return out;
}

std::vector<double> smc_pseudo_priors(const AnnealedFamily& family, const KernelSpec& spec, std::size_t particles,
                                      std::uint64_t seed) {
  RunConfig cfg{family};
  cfg.particles = particles;
  cfg.kernel = spec;
  cfg.seed = seed;
  const RunReport rep = run(cfg);
  std::vector<double> g{0.0};
  double acc = 0.0;
  for (const StepDiagnostics& d : rep.stages) {
    acc += d.log_z_increment;
    g.push_back(-acc);
  }
  return g;
}

STResult run_st(const TemperingConfig& config, const STObserver& observer) {
  const AnnealedFamily& family = config.family;
  const std::size_t levels = family.stages() + 1;
  const auto kernels = tempering_kernels(config.kernel, family);
  STResult out;
  out.log_pseudo_priors = config.log_pseudo_priors.empty()
                              ? smc_pseudo_priors(family, config.kernel, config.pseudo_prior_particles,
                                                  replicate_seed(config.seed, 1))
                              : config.log_pseudo_priors;
  if (out.log_pseudo_priors.size() != levels) throw std::invalid_argument("one pseudo-prior per temperature required");

  STState st;
  st.log_pseudo_priors = out.log_pseudo_priors;
  st.level = 0;
  if (config.start) {
    st.x = *config.start;
  } else {
    if (!family.model().can_sample_exactly(family.beta(0)))
      throw std::invalid_argument("no exact sampler for mu_0; give a start state");
    st.x = State(family.dimension());
    Stream rng(config.seed, 0, Phase::initialize, 0);
    family.model().sample_tempered(family.beta(0), st.x, rng);
  }
  if (st.x.size() != family.dimension()) throw std::invalid_argument("start state has the wrong dimension");

  out.level_occupancy.assign(levels, 0.0);
  out.level_trace.reserve(config.sweeps);
  out.cell_trace.reserve(config.sweeps);
  for (std::size_t s = 0; s < config.sweeps; ++s) {
    st_step(st, family, kernels, config.seed, s);
    const int cell = family.partition().classify(st.x);
    out.level_trace.push_back(st.level);
    out.cell_trace.push_back(cell);
    out.level_occupancy[st.level] += 1.0;
    if (st.level + 1 == levels) out.target_cell_trace.push_back(cell);
    if (observer) observer(st);
  }
  if (config.sweeps > 0) {
    for (double& o : out.level_occupancy) o /= static_cast<double>(config.sweeps);
  }
  out.final = std::move(st);
  return out;
}

std::vector<int> run_mcmc(const AnnealedFamily& family, const KernelSpec& spec, std::size_t sweeps,
                          std::uint64_t seed, const std::optional<State>& start) {
  const std::size_t top = family.stages();
  const MarkovKernel k = make_kernel(spec, family, top);
  State x(family.dimension());
  if (start) {
    if (start->size() != family.dimension()) throw std::invalid_argument("start state has the wrong dimension");
    x = *start;
  } else {
    Stream rng(seed, 0, Phase::initialize, 0);
    family.model().sample_tempered(1.0, x, rng);
  }
  std::vector<double> work(k.workspace_size(x.size()));
  std::vector<int> trace;
  trace.reserve(sweeps);
  for (std::size_t s = 0; s < sweeps; ++s) {
    Stream rng(seed, sweep_index(s), Phase::chain, 0);
    k.step(x, work, rng);
    trace.push_back(family.partition().classify(x));
  }
  return trace;
}

}  // namespace psmc
