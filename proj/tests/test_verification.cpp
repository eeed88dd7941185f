#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "psmc/kernels.hpp"
#include "psmc/verification.hpp"

using namespace psmc;

namespace {

std::vector<double> random_simplex(std::mt19937_64& gen, std::size_t n, double zero_prob = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (double& x : p) s += (x = u(gen) < zero_prob ? 0.0 : u(gen));
  if (s == 0.0) {
    p[0] = 1.0;
    s = 1.0;
  }
  for (double& x : p) x /= s;
  return p;
}

// Worst TV over the vertices of {0 <= eta <= M mu, sum eta = 1}: M mu on a
// set S, the remainder on one further state, zero elsewhere.
double vertex_warm_tv(const Eigen::MatrixXd& kt, const std::vector<double>& mu, double M) {
  const std::size_t n = mu.size();
  double best = 0.0;
  for (std::uint32_t s = 0; s < (1U << n); ++s) {
    double used = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if ((s >> k) & 1U) used += M * mu[k];
    if (used > 1.0 + 1e-12) continue;
    for (std::size_t extra = 0; extra < n; ++extra) {
      if ((s >> extra) & 1U) continue;
      const double rest = 1.0 - used;
      if (rest > M * mu[extra] + 1e-12) continue;
      std::vector<double> eta(n, 0.0);
      for (std::size_t k = 0; k < n; ++k)
        if ((s >> k) & 1U) eta[k] = M * mu[k];
      eta[extra] = rest;
      double tv = 0.0;
      for (std::size_t m = 0; m < n; ++m) {
        double x = 0.0;
        for (std::size_t k = 0; k < n; ++k) x += eta[k] * kt(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
        tv += std::abs(x - mu[m]);
      }
      best = std::max(best, 0.5 * tv);
    }
  }
  return best;
}

// Random reversible Metropolis matrix on n states with stationary law mu.
Eigen::MatrixXd random_reversible(std::mt19937_64& gen, const std::vector<double>& mu) {
  const auto n = static_cast<Eigen::Index>(mu.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd q(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) q(i, j) = q(j, i) = u(gen);
  const Eigen::VectorXd rows = q.rowwise().sum();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double fwd = mu[static_cast<std::size_t>(i)] * q(i, j) / rows(i);
      const double back = mu[static_cast<std::size_t>(j)] * q(j, i) / rows(j);
      p(i, j) = q(i, j) / rows(i) * std::min(1.0, back / fwd);
      off += p(i, j);
    }
    p(i, i) = 1.0 - off;
  }
  return p;
}

}  // namespace

TEST_CASE("exact annealed quantities by enumeration") {
  const DiscreteSpace ref = DiscreteSpace::reference();
  const ExactStage s = exact_annealed(ref, ref.stages());
  CHECK(s.cell_probs[0] == doctest::Approx(0.5));
  CHECK(s.cell_probs[1] == doctest::Approx(0.5));
  CHECK(s.conditionals[0][0] == doctest::Approx(0.8));
  CHECK(s.conditionals[0][1] == doctest::Approx(0.2));
  CHECK(s.conditionals[1][0] == doctest::Approx(0.4));
  CHECK(s.conditionals[1][1] == doctest::Approx(0.6));
  CHECK(s.log_z == doctest::Approx(0.0).epsilon(1e-12));

  const DiscreteSpace flat(AnnealedFamily(discrete_target({0.0, 0.0, 0.0, 0.0}, {0, 0, 1, 1}), {1.0}));
  const ExactStage f = exact_annealed(flat, 0);
  CHECK(f.cell_probs[0] == doctest::Approx(0.5));
  CHECK(f.conditionals[1][0] == doctest::Approx(0.5));

  const DiscreteSpace cold(AnnealedFamily(discrete_target({0.0, 3.0, -2.0}, {0, 1, 1}), {1e-9, 1.0}));
  const ExactStage c = exact_annealed(cold, 0);
  CHECK(c.cell_probs[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  CHECK(c.cell_probs[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("total variation distance") {
  const std::vector<double> a{0.5, 0.5}, b{0.8, 0.2}, c{1.0, 0.0}, d{0.0, 1.0};
  CHECK(tv_distance(a, a) == 0.0);
  CHECK(tv_distance(c, d) == 1.0);
  CHECK(tv_distance(a, b) == doctest::Approx(0.3));
  CHECK_THROWS(tv_distance(a, std::vector<double>{0.5, 0.6}));
  CHECK_THROWS(tv_distance(a, std::vector<double>{0.5, 0.25, 0.25}));
}

TEST_CASE("coupling map edge cases") {
  const std::vector<double> f{0.2, 0.3, 0.5}, disjoint_a{1.0, 0.0, 0.0}, disjoint_b{0.0, 0.4, 0.6};
  Stream rng(4, 0, Phase::verify, 0);
  for (int i = 0; i < 10000; ++i) CHECK(coupling_map(f, f, rng).equal);
  const CouplingMap apart(disjoint_a, disjoint_b);
  for (int i = 0; i < 10000; ++i) {
    const CoupledPair pr = apart.draw(rng);
    CHECK_FALSE(pr.equal);
    CHECK(pr.x == 0);
    CHECK(pr.x_bar != 0);
  }
  CHECK_THROWS(CouplingMap({0.5, 0.5}, {1.0}));
}

TEST_CASE("coupling map on two states has the right marginals and disagreement") {
  const CouplingMap cm({0.5, 0.5}, {0.8, 0.2});
  Stream rng(5, 0, Phase::verify, 0);
  const int n = 1000000;
  int differ = 0, x0 = 0, y0 = 0;
  for (int i = 0; i < n; ++i) {
    const CoupledPair p = cm.draw(rng);
    differ += p.x != p.x_bar;
    x0 += p.x == 0;
    y0 += p.x_bar == 0;
  }
  auto within = [n](int count, double p, double k) {
    return std::abs(count / static_cast<double>(n) - p) <= k * std::sqrt(p * (1 - p) / n);
  };
  CHECK(within(differ, 0.3, 3.0));
  CHECK(within(x0, 0.5, 4.0));
  CHECK(within(y0, 0.8, 4.0));
}

TEST_CASE("coupling map marginals and disagreement on random pairs") {
  std::mt19937_64 gen(31);
  const int draws = 200000;
  for (int pair = 0; pair < 20; ++pair) {
    const std::size_t n = 2 + static_cast<std::size_t>(pair % 15);
    const auto f = random_simplex(gen, n, 0.2), g = random_simplex(gen, n, 0.2);
    const CouplingMap cm(f, g);
    Stream rng(6, 0, Phase::verify, static_cast<std::uint32_t>(pair));
    std::vector<double> cf(n, 0.0), cg(n, 0.0);
    double differ = 0.0;
    for (int i = 0; i < draws; ++i) {
      const CoupledPair p = cm.draw(rng);
      cf[p.x] += 1.0;
      cg[p.x_bar] += 1.0;
      differ += p.x != p.x_bar;
    }
    const double tv = tv_distance(f, g);
    CHECK(std::abs(differ / draws - tv) <= 4.0 * std::sqrt(tv * (1 - tv) / draws) + 1e-12);
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(std::abs(cf[k] / draws - f[k]) <= 4.0 * std::sqrt(f[k] * (1 - f[k]) / draws) + 1e-12);
      CHECK(std::abs(cg[k] / draws - g[k]) <= 4.0 * std::sqrt(g[k] * (1 - g[k]) / draws) + 1e-12);
    }
  }
}

TEST_CASE("warm-start supremum agrees with vertex enumeration") {
  std::mt19937_64 gen(8);
  for (int r = 0; r < 30; ++r) {
    const std::size_t n = 2 + static_cast<std::size_t>(r % 5);
    const auto mu = random_simplex(gen, n);
    const Eigen::MatrixXd k = random_reversible(gen, mu);
    Eigen::MatrixXd kt = k;
    for (int t = 0; t < r % 4; ++t) kt = kt * k;
    for (double m : {1.0, 1.5, 3.0, 7.0})
      CHECK(warm_start_tv(kt, mu, m) == doctest::Approx(vertex_warm_tv(kt, mu, m)).epsilon(1e-10));
  }
}

TEST_CASE("warm mixing time examples") {
  const std::vector<double> mu{0.25, 0.75};
  Eigen::MatrixXd k(2, 2);
  k << 0.4, 0.6, 0.2, 0.8;
  CHECK(verify_warm_mixing(k, mu, 1.0, 0.01).tau == 0);

  // Two states: eta K^t - mu = lambda^t (eta - mu) with lambda = 1 - a - b.
  const double lambda = 1.0 - 0.6 - 0.2;
  for (double m : {2.0, 3.0, 7.0}) {
    const double start = std::max(std::min(1.0, m * mu[0]) - mu[0], std::min(1.0, m * mu[1]) - mu[1]);
    for (double eps : {0.09, 0.013, 7e-4}) {
      std::size_t hand = 0;
      while (start * std::pow(std::abs(lambda), static_cast<double>(hand)) > eps) ++hand;
      const WarmMixingResult res = verify_warm_mixing(k, mu, m, eps);
      CHECK(res.tau == hand);
      CHECK(res.within_bound);
    }
  }
}

TEST_CASE("warm mixing never exceeds the gap bound on random restricted kernels") {
  std::mt19937_64 gen(12);
  for (int r = 0; r < 20; ++r) {
    const std::size_t n = 2 + static_cast<std::size_t>(r % 7);
    const auto mu = random_simplex(gen, n);
    const WarmMixingResult res = verify_warm_mixing(random_reversible(gen, mu), mu, 7.0, 0.01);
    CHECK(res.within_bound);
  }
  const DiscreteSpace ref = DiscreteSpace::reference();
  for (std::size_t v = 1; v <= ref.stages(); ++v) {
    const Eigen::MatrixXd p =
        transition_matrix(RestrictedKernel(make_kernel({}, ref.family(), v), ref.family().model_ptr()), ref);
    for (int c = 0; c < 2; ++c) CHECK(verify_warm_mixing(ref, p, v, c, 7.0, 1e-3).within_bound);
  }
}

TEST_CASE("multinomial draws") {
  Stream rng(3, 0, Phase::verify, 0);
  const std::vector<double> w{1.0, 2.0, 0.0, 7.0};
  std::vector<double> total(4, 0.0);
  for (int r = 0; r < 2000; ++r) {
    const auto c = multinomial(1000, w, rng);
    CHECK(c[0] + c[1] + c[2] + c[3] == 1000);
    CHECK(c[2] == 0);
    for (std::size_t k = 0; k < 4; ++k) total[k] += static_cast<double>(c[k]);
  }
  const double n = 2e6;
  for (std::size_t k : {0, 1, 3}) {
    const double p = w[k] / 10.0;
    CHECK(std::abs(total[k] / n - p) < 4.0 * std::sqrt(p * (1 - p) / n));
  }
}

TEST_CASE("count simulator matches the particle engine in distribution") {
  const DiscreteSpace ref = DiscreteSpace::reference();
  const std::size_t t = 20;
  const auto kernels = restricted_kernel_powers(ref, {}, t);
  RunConfig cfg{ref.family()};
  cfg.particles = 2000;
  cfg.steps = t;
  const int reps = 300;
  std::vector<double> a, b, la, lb;
  for (int r = 0; r < reps; ++r) {
    cfg.seed = replicate_seed(77, static_cast<std::uint64_t>(r));
    const RunReport e = run(cfg);
    const CountRun c = simulate_counts(ref, kernels, cfg.particles, replicate_seed(78, static_cast<std::uint64_t>(r)));
    for (std::size_t v = 0; v < ref.stages(); ++v) {
      a.push_back(e.stages[v].resample_probs[0]);
      b.push_back(c.report.stages[v].resample_probs[0]);
    }
    la.push_back(e.log_z);
    lb.push_back(c.report.log_z);
  }
  auto moments = [](const std::vector<double>& x, std::size_t stride, std::size_t offset) {
    double s = 0.0, s2 = 0.0, n = 0.0;
    for (std::size_t i = offset; i < x.size(); i += stride, n += 1.0) {
      s += x[i];
      s2 += x[i] * x[i];
    }
    const double m = s / n;
    return std::pair<double, double>{m, std::sqrt((s2 - n * m * m) / (n - 1.0))};
  };
  for (std::size_t v = 0; v < ref.stages(); ++v) {
    const auto [ma, sa] = moments(a, ref.stages(), v);
    const auto [mb, sb] = moments(b, ref.stages(), v);
    CHECK(std::abs(ma - mb) < 4.0 * std::sqrt((sa * sa + sb * sb) / reps));
    CHECK(sa / sb == doctest::Approx(1.0).epsilon(0.25));
  }
  const auto [mza, sza] = moments(la, 1, 0);
  const auto [mzb, szb] = moments(lb, 1, 0);
  CHECK(std::abs(mza - mzb) < 4.0 * std::sqrt((sza * sza + szb * szb) / reps));
  CHECK(sza / szb == doctest::Approx(1.0).epsilon(0.25));
}

TEST_CASE("count simulator is deterministic and conserves particles") {
  const DiscreteSpace ref = DiscreteSpace::reference();
  const auto kernels = restricted_kernel_powers(ref, {}, 5);
  const CountRun x = simulate_counts(ref, kernels, 123456789, 5);
  const CountRun y = simulate_counts(ref, kernels, 123456789, 5);
  CHECK(x.final_counts == y.final_counts);
  CHECK(x.report.log_z == y.report.log_z);
  std::uint64_t total = 0;
  for (auto c : x.final_counts) total += c;
  CHECK(total == 123456789);
  CHECK(x.report.log_z == doctest::Approx(ref.log_partition(ref.stages()) - ref.log_partition(0)).epsilon(1e-3));
}

TEST_CASE("local warmness with good mixing stays far below seven") {
  const DiscreteSpace ref = DiscreteSpace::reference();
  RunConfig cfg{ref.family()};
  cfg.particles = 2000;
  cfg.steps = 50;
  cfg.seed = 13;
  const WarmnessReport w = verify_local_warmness(ref, cfg, 50);
  REQUIRE(w.stages.size() == ref.stages());
  CHECK(w.below(7.0));
  for (const auto& s : w.stages) CHECK(s.max_ratio < 1.1);
  CHECK(w.extinction_rate == 0.0);
}

TEST_CASE("local warmness can fail without mutation on a skewed space") {
  std::vector<double> log_q(11, 0.0);
  std::vector<int> labels(11, 0);
  log_q[9] = 12.0;
  log_q[10] = 12.0;
  labels[10] = 1;
  const AnnealedFamily fam = AnnealedFamily::with_uniform_start(discrete_target(log_q, labels), std::vector<double>{1.0});
  const DiscreteSpace space(fam);
  RunConfig cfg{fam};
  cfg.particles = 20;
  cfg.steps = 0;
  cfg.seed = 2;
  const WarmnessReport w = verify_local_warmness(space, cfg, 200);
  CHECK_FALSE(w.below(7.0));
  CHECK(w.stages[0].max_ratio > 7.0);
}

TEST_CASE("conditional expectation identity on the reference family") {
  const DiscreteSpace ref = DiscreteSpace::reference();
  RunConfig cfg{ref.family()};
  cfg.particles = 500;
  cfg.steps = 60;
  cfg.seed = 21;
  const IdentityReport rep = verify_cond_exp_identity(ref, cfg, 300);
  CHECK(rep.strata.size() == ref.stages() * 2 * 3);
  for (const auto& s : rep.strata) {
    CHECK_FALSE(s.skipped);
    CHECK(std::abs(s.z) <= 3.0);
  }
  CHECK(rep.pass());
}

TEST_CASE("conditional expectation identity with one cell reduces to the z ratio") {
  const AnnealedFamily fam(discrete_target({std::log(0.4), std::log(0.1), std::log(0.2), std::log(0.3)}, {0, 0, 0, 0}),
                           {0.25, 0.5, 0.75, 1.0});
  const DiscreteSpace space(fam);
  RunConfig cfg{fam};
  cfg.particles = 200;
  cfg.steps = 10;
  cfg.seed = 22;
  const IdentityReport rep = verify_cond_exp_identity(space, cfg, 100, 1);
  for (const auto& s : rep.strata) {
    CHECK(s.mean_rhs == doctest::Approx(std::exp(space.log_partition(s.stage + 1) - space.log_partition(s.stage))));
  }
  CHECK(rep.pass());

  const IdentityReport thin = verify_cond_exp_identity(space, cfg, 40, 2);
  for (const auto& s : thin.strata) CHECK(s.skipped);
}

TEST_CASE("concentration check") {
  const ConcentrationReport wide = verify_concentration(0.0, 1.0, 50, 1.0, 500, 1);
  CHECK(wide.exceedances == 0);
  const ConcentrationReport rep = verify_concentration(0.0, 1.0, 1000, 0.1, 10000, 2);
  CHECK(rep.bound == doctest::Approx(4.0 * std::exp(-5.0)));
  CHECK(rep.pass);
  const ConcentrationReport doubled = verify_concentration(0.0, 1.0, 2000, 0.1, 10, 2);
  CHECK(doubled.bound / 4.0 == doctest::Approx(std::pow(rep.bound / 4.0, 2.0)));
}
