#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "psmc/distributions.hpp"
#include "psmc/kernels.hpp"
#include "psmc/state.hpp"

namespace psmc {

/// Per adjacent pair (v, v+1): proposed and accepted swaps.
struct SwapStats {
  std::vector<std::size_t> proposed;
  std::vector<std::size_t> accepted;
  double acceptance(std::size_t pair) const;
};

struct SwapRecord {
  std::size_t pair = 0;
  double log_ratio = 0.0;
  bool accepted = false;
};

/// One chain per temperature; row v targets mu_v.
struct ReplicaSystem {
  StateMatrix chains;
  std::vector<int> cells;
  SwapStats swaps;
  std::size_t sweeps = 0;
};

/// log of mu_u(x_w) mu_w(x_u) / (mu_u(x_u) mu_w(x_w)) for exchanging the
/// states held at temperatures u and w.
double swap_log_ratio(const AnnealedFamily& family, std::size_t u, std::size_t w, StateView x_u, StateView x_w);

/// Every chain starts from `start` if given, otherwise from an exact draw of its mu_v.
ReplicaSystem pt_initialize(const AnnealedFamily& family, std::uint64_t seed,
                            const std::optional<State>& start = std::nullopt);

/// One sweep: every chain takes one step of its kernel (in parallel), then
/// one uniformly chosen adjacent pair attempts a Metropolis swap.
void pt_step(ReplicaSystem& system, const AnnealedFamily& family, const std::vector<MarkovKernel>& kernels,
             std::uint64_t seed, int threads = 0, SwapRecord* record = nullptr);

struct STState {
  State x;
  std::size_t level = 0;
  std::vector<double> log_pseudo_priors;  // one per temperature
};

/// One sweep: a kernel step at the current temperature, then a proposed
/// jump to level +/- 1 (probability 1/2 each) accepted by Metropolis on
/// g_v q^{beta_v}(x).
void st_step(STState& state, const AnnealedFamily& family, const std::vector<MarkovKernel>& kernels,
             std::uint64_t seed, std::size_t sweep);

struct CrossingReport {
  std::size_t sweeps = 0;
  std::size_t crossings = 0;
  double crossings_per_sweep = 0.0;
  std::vector<double> occupancy;
};

/// Counts label changes between consecutive entries of `trace`.
CrossingReport mode_crossing_report(std::span<const int> trace, int cell_count);

/// One kernel per temperature of `family`.
std::vector<MarkovKernel> tempering_kernels(const KernelSpec& spec, const AnnealedFamily& family);

struct TemperingConfig {
  AnnealedFamily family;
  KernelSpec kernel{};
  std::size_t sweeps = 10000;
  std::uint64_t seed = 0;
  int threads = 0;
  std::optional<State> start{};
  /// ST only; empty means estimate log z_v with an SMC run and use -log z_hat_v.
  std::vector<double> log_pseudo_priors{};
  std::size_t pseudo_prior_particles = 1000;
};

struct PTResult {
  ReplicaSystem system;
  /// cell_traces[v][s]: cell of chain v after sweep s.
  std::vector<std::vector<int>> cell_traces;
  std::vector<double> swap_acceptance;
};

using ReplicaObserver = std::function<void(const ReplicaSystem&)>;

PTResult run_pt(const TemperingConfig& config, const ReplicaObserver& observer = {});

struct STResult {
  STState final;
  std::vector<std::size_t> level_trace;
  std::vector<int> cell_trace;
  std::vector<double> level_occupancy;
  std::vector<double> log_pseudo_priors;
  /// Cell trace restricted to sweeps spent at the top temperature.
  std::vector<int> target_cell_trace;
};

using STObserver = std::function<void(const STState&)>;

STResult run_st(const TemperingConfig& config, const STObserver& observer = {});

/// Plain MCMC at beta = 1 without any restriction: returns the cell trace.
std::vector<int> run_mcmc(const AnnealedFamily& family, const KernelSpec& spec, std::size_t sweeps,
                          std::uint64_t seed, const std::optional<State>& start = std::nullopt);

/// -log z_hat_v for v = 0..V from the running sums of an SMC run's log z increments.
std::vector<double> smc_pseudo_priors(const AnnealedFamily& family, const KernelSpec& spec, std::size_t particles,
                                      std::uint64_t seed);

}  // namespace psmc
