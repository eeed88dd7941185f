#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "psmc/discrete_space.hpp"
#include "psmc/smc.hpp"

using namespace psmc;

namespace {

bool same_report(const RunReport& a, const RunReport& b) {
  if (!(a.final.states == b.final.states) || a.final.cells != b.final.cells) return false;
  if (a.stages.size() != b.stages.size() || a.log_z != b.log_z) return false;
  for (std::size_t v = 0; v < a.stages.size(); ++v) {
    const auto& x = a.stages[v];
    const auto& y = b.stages[v];
    if (x.cell_weight_sums != y.cell_weight_sums || x.resample_probs != y.resample_probs ||
        x.occupancy_before != y.occupancy_before || x.occupancy_after != y.occupancy_after ||
        x.log_z_increment != y.log_z_increment)
      return false;
  }
  return true;
}

// Upper 1% point of chi-square with k degrees of freedom (Wilson-Hilferty).
double chi2_upper_1pct(double k) {
  const double z = 2.3263478740408408;
  const double a = 2.0 / (9.0 * k);
  return k * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("uniform initialization on a small Ising space") {
  auto fam = AnnealedFamily::with_uniform_start(ising_target(3, 1.0), linear_schedule(3));
  RunConfig cfg{fam};
  cfg.particles = 100000;
  cfg.seed = 17;
  const ParticleSystem sys = initialize(cfg);
  const DiscreteSpace space(fam);
  std::vector<int> counts(8, 0);
  for (std::size_t i = 0; i < sys.size(); ++i) {
    ++counts[space.index_of(sys.states.row(i))];
    CHECK(sys.cells[i] == fam.partition().classify(sys.states.row(i)));
  }
  const double n = 100000, e = n / 8, se = std::sqrt(n * (1.0 / 8) * (7.0 / 8));
  for (int c : counts) CHECK(std::abs(c - e) <= 3.0 * se);
}

TEST_CASE("initialization is identical across engines and thread counts") {
  auto fam = AnnealedFamily(gaussian_mixture_target(4, 0.5, 1.0, 1.0), geometric_schedule(4));
  RunConfig cfg{fam};
  cfg.particles = 5000;
  cfg.seed = 99;
  cfg.engine = Engine::serial;
  const ParticleSystem ref = initialize(cfg);
  cfg.engine = Engine::parallel;
  for (int threads : {1, 3, 8}) {
    cfg.threads = threads;
    const ParticleSystem par = initialize(cfg);
    CHECK(par.states == ref.states);
    CHECK(par.cells == ref.cells);
  }
}

TEST_CASE("gaussian initialization: cell occupancy and projected law") {
  const GaussianMixtureParams g{2, 0.5, 1.0, 1.0};
  const auto betas = geometric_schedule(2);
  auto fam = AnnealedFamily(std::make_shared<GaussianMixtureModel>(g), betas);
  RunConfig cfg{fam};
  cfg.particles = 100000;
  cfg.seed = 5;
  const ParticleSystem sys = initialize(cfg);
  const auto occ = sys.occupancy(2);
  CHECK(std::abs(occ[0] / 1e5 - 0.5) < 4.0 * std::sqrt(0.25 / 1e5));

  // Kolmogorov-Smirnov on t = sum(x)/sqrt(d) against the truncated-normal mixture.
  const double beta = betas[0], c = std::sqrt(2.0), s = 1.0 / std::sqrt(beta);
  const double ph = std::pow(0.5, beta) / (2.0 * std::pow(0.5, beta));
  auto cdf = [&](double t) {
    const double up_mass = phi_cdf(c / s), lo_mass = phi_cdf(c / s);
    if (t <= 0.0) return (1 - ph) * phi_cdf((t + c) / s) / lo_mass;
    return (1 - ph) + ph * (phi_cdf((t - c) / s) - phi_cdf(-c / s)) / up_mass;
  };
  std::vector<double> t;
  for (std::size_t i = 0; i < sys.size(); ++i) t.push_back((sys.states.row(i)[0] + sys.states.row(i)[1]) / c);
  std::sort(t.begin(), t.end());
  double ks = 0.0;
  const double n = static_cast<double>(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double f = cdf(t[i]);
    ks = std::max({ks, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  CHECK(ks < 1.628 / std::sqrt(n));
}

TEST_CASE("resampling equal weights gives multinomial offspring counts") {
  const std::size_t n = 1000;
  int rejected = 0;
  const int reps = 1000;
  for (int r = 0; r < reps; ++r) {
    ParticleSystem sys;
    sys.states = StateMatrix(n, 1);
    sys.cells.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) sys.states.row(i)[0] = static_cast<double>(i);
    std::vector<double> lw(n, 0.3);
    std::vector<std::size_t> anc;
    resample(sys, lw, 1, static_cast<std::uint64_t>(r), 1, &anc);
    std::vector<int> counts(n, 0);
    for (std::size_t a : anc) ++counts[a];
    double chi2 = 0.0;
    for (int k : counts) chi2 += (k - 1.0) * (k - 1.0);
    rejected += chi2 > chi2_upper_1pct(static_cast<double>(n - 1));
  }
  CHECK(rejected / double(reps) <= 0.01 + 3.0 * std::sqrt(0.01 * 0.99 / reps));
}

TEST_CASE("resampling with a single positive weight copies that particle") {
  ParticleSystem sys;
  sys.states = StateMatrix(5, 1);
  sys.cells = {0, 1, 0, 1, 0};
  for (std::size_t i = 0; i < 5; ++i) sys.states.row(i)[0] = static_cast<double>(i);
  const double ninf = -std::numeric_limits<double>::infinity();
  const std::vector<double> lw{ninf, ninf, ninf, 2.0, ninf};
  const auto diag = resample(sys, lw, 2, 1, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(sys.states.row(i)[0] == 3.0);
    CHECK(sys.cells[i] == 1);
  }
  CHECK(diag.resample_probs == std::vector<double>{0.0, 1.0});
  CHECK(diag.occupancy_before == std::vector<std::size_t>{3, 2});
  CHECK(diag.occupancy_after == std::vector<std::size_t>{0, 5});
}

TEST_CASE("resampling weights (2,1,1) picks the first source half the time") {
  const int reps = 20000;
  int first = 0;
  for (int r = 0; r < reps; ++r) {
    ParticleSystem sys;
    sys.states = StateMatrix(3, 1);
    sys.cells = {0, 0, 0};
    std::vector<std::size_t> anc;
    resample(sys, std::vector<double>{std::log(2.0), 0.0, 0.0}, 1, static_cast<std::uint64_t>(r), 1, &anc);
    first += anc[0] == 0;
  }
  CHECK(std::abs(first / double(reps) - 0.5) < 3.0 * std::sqrt(0.25 / reps));
}

TEST_CASE("weight collapse reports the stage") {
  ParticleSystem sys;
  sys.states = StateMatrix(3, 1);
  sys.cells = {0, 0, 0};
  const double ninf = -std::numeric_limits<double>::infinity();
  try {
    resample(sys, std::vector<double>{ninf, ninf, ninf}, 1, 1, 7);
    FAIL("expected a weight collapse");
  } catch (const WeightCollapse& e) {
    CHECK(e.stage() == 7);
  }
}

TEST_CASE("diagnostics: conservation and the weight identity") {
  const DiscreteSpace space = DiscreteSpace::reference();
  RunConfig cfg{space.family()};
  cfg.particles = 2000;
  cfg.steps = 5;
  cfg.seed = 3;
  const RunReport rep = run(cfg);
  REQUIRE(rep.stages.size() == 3);
  for (const auto& d : rep.stages) {
    CHECK(std::abs(std::accumulate(d.resample_probs.begin(), d.resample_probs.end(), 0.0) - 1.0) < 1e-12);
    CHECK(std::accumulate(d.occupancy_before.begin(), d.occupancy_before.end(), std::size_t{0}) == 2000);
    CHECK(std::accumulate(d.occupancy_after.begin(), d.occupancy_after.end(), std::size_t{0}) == 2000);
    const double total = d.cell_weight_sums[0] + d.cell_weight_sums[1];
    CHECK(d.log_z_increment == doctest::Approx(std::log(total)).epsilon(1e-12));
    CHECK(d.resample_probs[0] == doctest::Approx(d.cell_weight_sums[0] / total).epsilon(1e-12));
  }
  CHECK(estimate_log_partition(rep) == doctest::Approx(rep.log_z).epsilon(1e-14));
}

TEST_CASE("mutation: t = 0 is a no-op and cells never change") {
  auto fam = AnnealedFamily(gaussian_mixture_target(3, 0.5, 1.0, 1.0), geometric_schedule(3));
  RunConfig cfg{fam};
  cfg.particles = 3000;
  cfg.seed = 12;
  ParticleSystem sys = initialize(cfg);
  sys.stage = 2;
  const ParticleSystem before = sys;
  RestrictedKernel rk(make_kernel({}, fam, 2), fam.model_ptr());
  mutate(sys, rk, 0, 1);
  CHECK(sys.states == before.states);
  for (std::size_t t : {1, 10, 50}) {
    mutate(sys, rk, t, 100 + t);
    CHECK(sys.cells == before.cells);
    for (std::size_t i = 0; i < sys.size(); ++i) CHECK(fam.partition().classify(sys.states.row(i)) == sys.cells[i]);
  }
}

TEST_CASE("serial and parallel mutation agree bit for bit") {
  auto fam = AnnealedFamily::with_uniform_start(ising_target(11, 1.0), linear_schedule(11));
  RunConfig cfg{fam};
  cfg.particles = 4000;
  cfg.seed = 8;
  ParticleSystem a = initialize(cfg);
  a.stage = 4;
  ParticleSystem b = a;
  RestrictedKernel rk(make_kernel({}, fam, 4), fam.model_ptr());
  mutate(a, rk, 30, 55, Engine::serial);
  mutate(b, rk, 30, 55, Engine::parallel, 6);
  CHECK(a.states == b.states);
}

TEST_CASE("restricted mutation reaches the within-cell law") {
  const DiscreteSpace space = DiscreteSpace::reference();
  const auto& fam = space.family();
  const std::size_t n = 100000;
  for (std::size_t v = 1; v <= 3; ++v) {
    ParticleSystem sys;
    sys.states = StateMatrix(n, 1);
    sys.cells.resize(n);
    sys.stage = v;
    for (std::size_t i = 0; i < n; ++i) {
      const bool upper = i % 2;
      sys.states.row(i)[0] = upper ? 2.0 : 0.0;
      sys.cells[i] = upper ? 1 : 0;
    }
    RestrictedKernel rk(make_kernel({}, fam, v), fam.model_ptr());
    mutate(sys, rk, 50, 31);
    for (int c = 0; c < 2; ++c) {
      const auto members = space.cell_members(c);
      const auto cond = space.conditional(v, c);
      std::vector<double> freq(members.size(), 0.0);
      double count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sys.cells[i] != c) continue;
        const auto k = static_cast<std::size_t>(sys.states.row(i)[0]);
        freq[static_cast<std::size_t>(std::find(members.begin(), members.end(), k) - members.begin())] += 1;
        count += 1;
      }
      double tv = 0.0;
      for (std::size_t m = 0; m < members.size(); ++m) tv += 0.5 * std::abs(freq[m] / count - cond[m]);
      CHECK(tv < 0.02);
    }
  }
}

TEST_CASE("run with no stages returns the initial system") {
  auto fam = AnnealedFamily(ising_target(5, 0.5), {1.0});
  RunConfig cfg{fam};
  cfg.particles = 100;
  const RunReport rep = run(cfg);
  CHECK(rep.stages.empty());
  CHECK(rep.log_z == 0.0);
  CHECK(rep.final.size() == 100);
}

TEST_CASE("symmetric Ising run is centred at one half") {
  auto fam = AnnealedFamily::with_uniform_start(ising_target(15, 1.0), linear_schedule(15));
  auto cat = AnalyticCatalog::ising(15, 1.0, std::vector<double>(fam.betas().begin(), fam.betas().end()));
  const int reps = 20;
  double sum = 0.0, sum2 = 0.0, sign_sum = 0.0, err_sum = 0.0;
  for (int r = 0; r < reps; ++r) {
    RunConfig cfg{fam};
    cfg.particles = 2000;
    cfg.steps = 50;
    cfg.seed = 2024 + static_cast<std::uint64_t>(r);
    const RunReport rep = run(cfg);
    const double a1 = estimate(rep, [&](StateView x) { return fam.partition().classify(x) == 0 ? 1.0 : 0.0; });
    sum += a1;
    sum2 += a1 * a1;
    sign_sum += estimate(rep, [](StateView x) { return std::accumulate(x.begin(), x.end(), 0.0) > 0 ? 1.0 : -1.0; });
    const auto err = cell_tracking_error(rep, cat.cell_mass_table());
    err_sum += err.front();
    if (r == 0) {
      CHECK(estimate(rep, [](StateView) { return 1.0; }) == 1.0);
      CHECK_THROWS_AS(estimate(rep, [](StateView) { return 1.5; }), std::domain_error);
    }
  }
  const double mean = sum / reps;
  const double sd = std::sqrt(sum2 / reps - mean * mean);
  CHECK(std::abs(mean - 0.5) < 3.0 * sd / std::sqrt(double(reps)));
  // sign(sum x) = 2 * 1_{A_1} - 1 for odd d.
  CHECK(sign_sum / reps == doctest::Approx(2.0 * mean - 1.0).epsilon(1e-12));
  // The first-stage tracking error is a single resampling step from N uniform draws.
  CHECK(err_sum / reps < 3.0 * std::sqrt(0.25 / 2000.0));
}

TEST_CASE("runs are identical across thread counts and engines") {
  auto fam = AnnealedFamily(gaussian_mixture_target(3, 0.5, 1.0, 1.0), geometric_schedule(3));
  RunConfig cfg{fam};
  cfg.particles = 1500;
  cfg.steps = 10;
  cfg.seed = 77;
  cfg.threads = 1;
  const RunReport one = run(cfg);
  cfg.threads = 8;
  const RunReport eight = run(cfg);
  cfg.engine = Engine::serial;
  const RunReport ser = run(cfg);
  CHECK(same_report(one, eight));
  CHECK(same_report(one, ser));
}

TEST_CASE("symmetric gaussian mixture estimate") {
  auto fam = AnnealedFamily(gaussian_mixture_target(2, 0.5, 1.0, 1.0), geometric_schedule(2));
  RunConfig cfg{fam};
  cfg.particles = 4000;
  cfg.steps = 30;
  cfg.seed = 4;
  const RunReport rep = run(cfg);
  CHECK(std::abs(estimate(rep, [&](StateView x) { return fam.partition().classify(x) == 0 ? 1.0 : 0.0; }) - 0.5) <
        0.05);
}

TEST_CASE("log partition estimate with constant weights") {
  auto fam = AnnealedFamily(discrete_target({-1.2, -1.2, -1.2}, {0, 0, 1}), {0.5, 1.0});
  RunConfig cfg{fam};
  cfg.particles = 50;
  cfg.steps = 1;
  const RunReport rep = run(cfg);
  CHECK(estimate_log_partition(rep) == doctest::Approx(-0.6).epsilon(1e-14));
}

TEST_CASE("log partition estimate on the four-state family") {
  const DiscreteSpace space = DiscreteSpace::reference();
  const double exact = space.log_partition(3) - space.log_partition(0);
  int good = 0;
  for (std::uint64_t r = 0; r < 100; ++r) {
    RunConfig cfg{space.family()};
    cfg.particles = 10000;
    cfg.steps = 20;
    cfg.seed = r;
    const RunReport rep = run(cfg);
    good += std::abs(estimate_log_partition(rep) - exact) <= 0.05 * std::abs(exact);
  }
  CHECK(good >= 95);
}

TEST_CASE("log partition estimate on a one-dimensional gaussian mixture") {
  const std::vector<double> betas{0.25, 0.5, 0.75, 1.0};
  const GaussianMixtureParams g{1, 0.5, 1.0, 1.0};
  auto fam = AnnealedFamily(std::make_shared<GaussianMixtureModel>(g), betas);
  auto cat = AnalyticCatalog::gaussian_mixture(g, betas);
  double exact = 0.0;
  for (std::size_t v = 1; v < betas.size(); ++v) exact -= std::log(analytic_z_ratio(cat, v));
  RunConfig cfg{fam};
  cfg.particles = 10000;
  cfg.steps = 20;
  cfg.seed = 6;
  const RunReport rep = run(cfg);
  CHECK(std::abs(std::exp(estimate_log_partition(rep) - exact) - 1.0) < 0.05);
}

TEST_CASE("tracking error with a single particle") {
  const DiscreteSpace space = DiscreteSpace::reference();
  RunConfig cfg{space.family()};
  cfg.particles = 1;
  cfg.steps = 2;
  const RunReport rep = run(cfg);
  const auto table = space.cell_mass_table();
  const auto err = cell_tracking_error(rep, table);
  for (std::size_t v = 1; v <= 3; ++v) {
    const double worst = 1.0 - *std::min_element(table[v].begin(), table[v].end());
    CHECK(err[v - 1] == doctest::Approx(worst).epsilon(1e-12));
  }
}
