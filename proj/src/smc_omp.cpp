#include <exception>
#include <stdexcept>

#include <omp.h>

#include "psmc/particle_ops.hpp"
#include "psmc/rng.hpp"

namespace psmc::omp {

namespace {

int team_size(int threads) { return threads > 0 ? threads : omp_get_max_threads(); }

// Exceptions must not escape a parallel region; the first one is rethrown.
class ErrorSlot {
 public:
  template <class F>
  void run(F&& f) noexcept {
    try {
      f();
    } catch (...) {
#pragma omp critical(psmc_error_slot)
      if (!error_) error_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::exception_ptr error_;
};

}  // namespace

void initialize(const AnnealedFamily& family, std::uint64_t seed, StateMatrix& states, std::vector<int>& cells,
                int threads) {
  const double beta0 = family.beta(0);
  if (!family.model().can_sample_exactly(beta0))
    throw std::invalid_argument("initial distribution cannot be sampled exactly");
  cells.resize(states.rows());
  const auto n = static_cast<long>(states.rows());
  ErrorSlot err;
#pragma omp parallel for schedule(static) num_threads(team_size(threads))
  for (long i = 0; i < n; ++i) {
    err.run([&] {
      const auto k = static_cast<std::size_t>(i);
      Stream rng(seed, 0, Phase::initialize, static_cast<std::uint32_t>(k));
      family.model().sample_tempered(beta0, states.row(k), rng);
      cells[k] = family.partition().classify(states.row(k));
    });
  }
  err.rethrow();
}

void log_weights(const AnnealedFamily& family, std::size_t v, const StateMatrix& states, std::vector<double>& out,
                 int threads) {
  out.resize(states.rows());
  const auto n = static_cast<long>(states.rows());
  ErrorSlot err;
#pragma omp parallel for schedule(static) num_threads(team_size(threads))
  for (long i = 0; i < n; ++i) {
    err.run([&] { out[static_cast<std::size_t>(i)] = log_weight(family, v, states.row(static_cast<std::size_t>(i))); });
  }
  err.rethrow();
}

void mutate(const RestrictedKernel& kernel, std::size_t steps, std::uint64_t seed, std::size_t v,
            StateMatrix& states, const std::vector<int>& cells, int threads) {
  if (steps == 0) return;
  const auto n = static_cast<long>(states.rows());
#pragma omp parallel num_threads(team_size(threads))
  {
    std::vector<double> work(kernel.workspace_size(states.dim()));
#pragma omp for schedule(static)
    for (long i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      Stream rng(seed, static_cast<std::uint32_t>(v), Phase::mutate, static_cast<std::uint32_t>(k));
      for (std::size_t s = 0; s < steps; ++s) kernel.step(states.row(k), cells[k], work, rng);
    }
  }
}

void mutate_free(const MarkovKernel& kernel, const Partition& partition, std::size_t steps, std::uint64_t seed,
                 std::size_t v, StateMatrix& states, std::vector<int>& cells, int threads) {
  const auto n = static_cast<long>(states.rows());
#pragma omp parallel num_threads(team_size(threads))
  {
    std::vector<double> work(kernel.workspace_size(states.dim()));
#pragma omp for schedule(static)
    for (long i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      Stream rng(seed, static_cast<std::uint32_t>(v), Phase::mutate, static_cast<std::uint32_t>(k));
      for (std::size_t s = 0; s < steps; ++s) kernel.step(states.row(k), work, rng);
      cells[k] = partition.classify(states.row(k));
    }
  }
}

}  // namespace psmc::omp
