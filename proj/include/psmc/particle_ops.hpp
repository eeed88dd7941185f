#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "psmc/distributions.hpp"
#include "psmc/kernels.hpp"
#include "psmc/state.hpp"

namespace psmc {

/// Per-particle work of one SMC stage. Every particle draws from its own
/// stream keyed by (seed, stage, phase, particle index), so the serial and
/// OpenMP versions produce bit-identical results.
namespace serial {

void initialize(const AnnealedFamily& family, std::uint64_t seed, StateMatrix& states, std::vector<int>& cells);
void log_weights(const AnnealedFamily& family, std::size_t v, const StateMatrix& states, std::vector<double>& out);
void mutate(const RestrictedKernel& kernel, std::size_t steps, std::uint64_t seed, std::size_t v,
            StateMatrix& states, const std::vector<int>& cells);
/// Unrestricted mutation; cells are relabeled afterwards.
void mutate_free(const MarkovKernel& kernel, const Partition& partition, std::size_t steps, std::uint64_t seed,
                 std::size_t v, StateMatrix& states, std::vector<int>& cells);

}  // namespace serial

namespace omp {

/// threads <= 0 uses the OpenMP default.
void initialize(const AnnealedFamily& family, std::uint64_t seed, StateMatrix& states, std::vector<int>& cells,
                int threads);
void log_weights(const AnnealedFamily& family, std::size_t v, const StateMatrix& states, std::vector<double>& out,
                 int threads);
void mutate(const RestrictedKernel& kernel, std::size_t steps, std::uint64_t seed, std::size_t v,
            StateMatrix& states, const std::vector<int>& cells, int threads);
void mutate_free(const MarkovKernel& kernel, const Partition& partition, std::size_t steps, std::uint64_t seed,
                 std::size_t v, StateMatrix& states, std::vector<int>& cells, int threads);

}  // namespace omp

}  // namespace psmc
