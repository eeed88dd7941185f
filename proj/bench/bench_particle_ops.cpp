#include <benchmark/benchmark.h>

#include <omp.h>

#include "psmc/distributions.hpp"
#include "psmc/kernels.hpp"
#include "psmc/particle_ops.hpp"

using namespace psmc;

namespace {

AnnealedFamily gaussian_family() { return AnnealedFamily(gaussian_mixture_target(20, 0.5, 1.0, 1.0), geometric_schedule(20)); }

struct Fixture {
  AnnealedFamily family = gaussian_family();
  StateMatrix states;
  std::vector<int> cells;
  explicit Fixture(std::size_t n) : states(n, family.dimension()) { serial::initialize(family, 1, states, cells); }
};

void BM_MutateSerial(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)));
  const RestrictedKernel k(make_kernel({}, f.family, 1), f.family.model_ptr());
  for (auto _ : st) {
    serial::mutate(k, 10, 2, 1, f.states, f.cells);
    benchmark::ClobberMemory();
  }
  st.SetItemsProcessed(st.iterations() * st.range(0) * 10);
}

void BM_MutateOmp(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)));
  const RestrictedKernel k(make_kernel({}, f.family, 1), f.family.model_ptr());
  for (auto _ : st) {
    omp::mutate(k, 10, 2, 1, f.states, f.cells, 0);
    benchmark::ClobberMemory();
  }
  st.SetItemsProcessed(st.iterations() * st.range(0) * 10);
  st.counters["threads"] = omp_get_max_threads();
}

void BM_LogWeightsSerial(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)));
  std::vector<double> w;
  for (auto _ : st) {
    serial::log_weights(f.family, 1, f.states, w);
    benchmark::DoNotOptimize(w.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_LogWeightsOmp(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)));
  std::vector<double> w;
  for (auto _ : st) {
    omp::log_weights(f.family, 1, f.states, w, 0);
    benchmark::DoNotOptimize(w.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
  st.counters["threads"] = omp_get_max_threads();
}

}  // namespace

BENCHMARK(BM_MutateSerial)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MutateOmp)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LogWeightsSerial)->Arg(10000)->Arg(100000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LogWeightsOmp)->Arg(10000)->Arg(100000)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
