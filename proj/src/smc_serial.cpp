#include <stdexcept>

#include "psmc/particle_ops.hpp"
#include "psmc/rng.hpp"

namespace psmc::serial {

void initialize(const AnnealedFamily& family, std::uint64_t seed, StateMatrix& states, std::vector<int>& cells) {
  const double beta0 = family.beta(0);
  if (!family.model().can_sample_exactly(beta0))
    throw std::invalid_argument("initial distribution cannot be sampled exactly");
  cells.resize(states.rows());
  for (std::size_t i = 0; i < states.rows(); ++i) {
    Stream rng(seed, 0, Phase::initialize, static_cast<std::uint32_t>(i));
    family.model().sample_tempered(beta0, states.row(i), rng);
    cells[i] = family.partition().classify(states.row(i));
  }
}

void log_weights(const AnnealedFamily& family, std::size_t v, const StateMatrix& states, std::vector<double>& out) {
  out.resize(states.rows());
  for (std::size_t i = 0; i < states.rows(); ++i) out[i] = log_weight(family, v, states.row(i));
}

void mutate(const RestrictedKernel& kernel, std::size_t steps, std::uint64_t seed, std::size_t v,
            StateMatrix& states, const std::vector<int>& cells) {
  if (steps == 0) return;
  std::vector<double> work(kernel.workspace_size(states.dim()));
  for (std::size_t i = 0; i < states.rows(); ++i) {
    Stream rng(seed, static_cast<std::uint32_t>(v), Phase::mutate, static_cast<std::uint32_t>(i));
    for (std::size_t s = 0; s < steps; ++s) kernel.step(states.row(i), cells[i], work, rng);
  }
}

void mutate_free(const MarkovKernel& kernel, const Partition& partition, std::size_t steps, std::uint64_t seed,
                 std::size_t v, StateMatrix& states, std::vector<int>& cells) {
  std::vector<double> work(kernel.workspace_size(states.dim()));
  for (std::size_t i = 0; i < states.rows(); ++i) {
    Stream rng(seed, static_cast<std::uint32_t>(v), Phase::mutate, static_cast<std::uint32_t>(i));
    for (std::size_t s = 0; s < steps; ++s) kernel.step(states.row(i), work, rng);
    cells[i] = partition.classify(states.row(i));
  }
}

}  // namespace psmc::serial
