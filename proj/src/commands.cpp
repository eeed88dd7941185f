#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "psmc/baselines.hpp"
#include "psmc/cli.hpp"
#include "psmc/discrete_space.hpp"
#include "psmc/kernels.hpp"
#include "psmc/numeric.hpp"
#include "psmc/smc.hpp"
#include "psmc/theory.hpp"
#include "psmc/verification.hpp"

#ifndef PSMC_VERSION
#define PSMC_VERSION "unknown"
#endif

namespace psmc::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<std::size_t> replicates;
};

ExperimentConfig effective_config(const Overrides& o) {
  ExperimentConfig c;
  if (o.config.empty()) {
    c.algorithm.particles = 1000;
  } else {
    c = load_config(o.config);
  }
  if (o.seed) c.algorithm.seed = *o.seed;
  if (o.out) c.output.directory = *o.out;
  if (o.threads) {
    if (*o.threads < 0) throw ConfigError("--threads", "must be non-negative");
    c.algorithm.threads = *o.threads;
  }
  if (o.replicates) {
    if (*o.replicates == 0) throw ConfigError("--replicates", "must be at least 1");
    c.algorithm.replicates = *o.replicates;
  }
  return c;
}

bool wants(const OutputConfig& o, const std::string& format) {
  return std::find(o.formats.begin(), o.formats.end(), format) != o.formats.end();
}

std::uint64_t seed_of(const AlgorithmConfig& a, std::size_t r) {
  return a.replicates == 1 ? a.seed : replicate_seed(a.seed, r);
}

KernelSpec kernel_spec(const AlgorithmConfig& a) {
  return KernelSpec{kernel_kind_from_string(a.kernel), a.step_variance};
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
}

json base_summary(const std::string& command, const ExperimentConfig& c) {
  json s;
  s["command"] = command;
  s["code_version"] = PSMC_VERSION;
  s["config_hash"] = config_hash(c);
  s["config"] = to_json(c);
  return s;
}

std::optional<CellMassTable> try_exact_masses(const AnnealedFamily& f) {
  try {
    return exact_cell_masses(f);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::optional<double> try_exact_log_z(const AnnealedFamily& f) {
  try {
    return exact_log_partition(f.model(), f.beta(f.stages())) - exact_log_partition(f.model(), f.beta(0));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

double mean_of(const std::vector<double>& x) {
  if (x.empty()) return std::nan("");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Aggregate numbers a sweep row reports for one point.
struct PointResult {
  double log_z = std::nan("");
  double cell_fraction = std::nan("");
  double tracking_error = std::nan("");
  double crossings_per_sweep = std::nan("");
};

PointResult execute_smc(const ExperimentConfig& c, std::ostream& out) {
  const AnnealedFamily family = build_family(c.problem);
  const std::string hash = config_hash(c);
  const int p = family.partition().cell_count();
  const auto masses = try_exact_masses(family);
  const auto exact_log_z = try_exact_log_z(family);
  std::optional<double> phi_v;
  if (c.bounds) phi_v = phi(lambda_of(c.bounds->epsilon, std::max<std::size_t>(family.stages(), 1)));

  std::ostringstream diag, timing;
  diag << "stage,cell,w_hat,p_hat,occupancy_before,occupancy_after,log_z_increment,config_hash,seed\n";
  timing << "seed,stage,seconds\n";
  json summary = base_summary("run-smc", c);
  if (exact_log_z) summary["exact"]["log_z"] = *exact_log_z;
  if (masses) summary["exact"]["cell_probabilities"] = masses->back();
  summary["replicates"] = json::array();

  std::vector<double> log_zs, fractions, tracking;
  for (std::size_t r = 0; r < c.algorithm.replicates; ++r) {
    RunConfig rc{family};
    rc.particles = c.algorithm.particles;
    rc.steps = c.algorithm.steps;
    rc.kernel = kernel_spec(c.algorithm);
    rc.seed = seed_of(c.algorithm, r);
    rc.threads = c.algorithm.threads;
    rc.engine = c.algorithm.engine == "serial" ? Engine::serial : Engine::parallel;
    rc.restricted = c.algorithm.restricted;
    const RunReport rep = run(rc);

    for (const StepDiagnostics& d : rep.stages) {
      for (int j = 0; j < p; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        diag << d.stage << ',' << j + 1 << ',' << format_double(d.cell_weight_sums[jj]) << ','
             << format_double(d.resample_probs[jj]) << ',' << d.occupancy_before[jj] << ',' << d.occupancy_after[jj]
             << ',' << format_double(d.log_z_increment) << ',' << hash << ',' << rc.seed << '\n';
      }
    }
    for (std::size_t v = 0; v < rep.stage_seconds.size(); ++v)
      timing << rc.seed << ',' << v + 1 << ',' << format_double(rep.stage_seconds[v]) << '\n';

    json rj;
    rj["seed"] = rc.seed;
    rj["log_z"] = rep.log_z;
    const auto occ = rep.final.occupancy(p);
    std::vector<double> frac;
    for (std::size_t n : occ) frac.push_back(static_cast<double>(n) / static_cast<double>(rc.particles));
    rj["final_occupancy"] = occ;
    rj["cell_fractions"] = frac;
    if (masses) {
      const auto errs = cell_tracking_error(rep, *masses);
      rj["tracking_errors"] = errs;
      const double worst = errs.empty() ? 0.0 : *std::max_element(errs.begin(), errs.end());
      rj["max_tracking_error"] = worst;
      tracking.push_back(worst);
      if (phi_v) rj["sandwich_holds"] = resampling_sandwich_holds(rep, *masses, *phi_v);
    }
    summary["replicates"].push_back(rj);
    log_zs.push_back(rep.log_z);
    fractions.push_back(frac.front());
  }

  PointResult res{mean_of(log_zs), mean_of(fractions), mean_of(tracking), std::nan("")};
  summary["aggregate"]["mean_log_z"] = res.log_z;
  summary["aggregate"]["mean_first_cell_fraction"] = res.cell_fraction;
  if (!tracking.empty()) summary["aggregate"]["mean_max_tracking_error"] = res.tracking_error;

  const fs::path dir = c.output.directory;
  if (wants(c.output, "csv")) {
    write_file(dir / "diagnostics.csv", diag.str());
    write_file(dir / "timing.csv", timing.str());
  }
  if (wants(c.output, "json")) write_file(dir / "summary.json", summary.dump(2) + "\n");

  out << "run-smc: " << c.algorithm.replicates << " replicate(s), N = " << c.algorithm.particles
      << ", V = " << family.stages() << "\n";
  out << "  mean log z_hat = " << format_double(res.log_z);
  if (exact_log_z) out << " (exact " << format_double(*exact_log_z) << ")";
  out << "\n  mean first-cell fraction = " << format_double(res.cell_fraction) << "\n";
  return res;
}

TemperingConfig tempering_config(const ExperimentConfig& c, const AnnealedFamily& family, std::size_t r) {
  TemperingConfig t{family};
  t.kernel = kernel_spec(c.algorithm);
  t.sweeps = c.algorithm.sweeps;
  t.seed = seed_of(c.algorithm, r);
  t.threads = c.algorithm.threads;
  t.log_pseudo_priors = c.algorithm.log_pseudo_priors;
  t.pseudo_prior_particles = c.algorithm.pseudo_prior_particles;
  return t;
}

json crossing_json(const CrossingReport& r) {
  return json{{"sweeps", r.sweeps},
              {"crossings", r.crossings},
              {"crossings_per_sweep", r.crossings_per_sweep},
              {"occupancy", r.occupancy}};
}

PointResult execute_tempering(const ExperimentConfig& c, std::ostream& out) {
  const bool pt = c.algorithm.method == "pt";
  const AnnealedFamily family = build_family(c.problem);
  const int p = family.partition().cell_count();
  const std::string hash = config_hash(c);
  json summary = base_summary(pt ? "run-pt" : "run-st", c);
  summary["replicates"] = json::array();
  std::ostringstream trace;
  trace << "sweep,level,cell,config_hash,seed\n";
  std::vector<double> crossings, fractions;

  for (std::size_t r = 0; r < c.algorithm.replicates; ++r) {
    const TemperingConfig tc = tempering_config(c, family, r);
    json rj;
    rj["seed"] = tc.seed;
    CrossingReport target;
    if (pt) {
      const PTResult res = run_pt(tc);
      rj["swap_acceptance"] = res.swap_acceptance;
      json levels = json::array();
      for (const auto& t : res.cell_traces) levels.push_back(mode_crossing_report(t, p).occupancy);
      rj["level_cell_occupancy"] = levels;
      target = mode_crossing_report(res.cell_traces.back(), p);
      if (wants(c.output, "trace")) {
        for (std::size_t s = 0; s < tc.sweeps; ++s)
          for (std::size_t v = 0; v < res.cell_traces.size(); ++v)
            trace << s << ',' << v << ',' << res.cell_traces[v][s] + 1 << ',' << hash << ',' << tc.seed << '\n';
      }
    } else {
      const STResult res = run_st(tc);
      rj["level_occupancy"] = res.level_occupancy;
      rj["log_pseudo_priors"] = res.log_pseudo_priors;
      rj["all_levels"] = crossing_json(mode_crossing_report(res.cell_trace, p));
      target = mode_crossing_report(res.target_cell_trace, p);
      if (wants(c.output, "trace")) {
        for (std::size_t s = 0; s < tc.sweeps; ++s)
          trace << s << ',' << res.level_trace[s] << ',' << res.cell_trace[s] + 1 << ',' << hash << ',' << tc.seed
                << '\n';
      }
    }
    rj["target"] = crossing_json(target);
    crossings.push_back(target.crossings_per_sweep);
    if (!target.occupancy.empty() && target.sweeps > 0) fractions.push_back(target.occupancy.front());
    summary["replicates"].push_back(rj);
  }
  summary["note"] = "illustrative comparison; tempering results are not bound evaluations";

  const fs::path dir = c.output.directory;
  if (wants(c.output, "json")) write_file(dir / "summary.json", summary.dump(2) + "\n");
  if (wants(c.output, "trace")) write_file(dir / "trace.csv", trace.str());

  PointResult res;
  res.crossings_per_sweep = mean_of(crossings);
  res.cell_fraction = mean_of(fractions);
  out << (pt ? "run-pt" : "run-st") << ": " << c.algorithm.replicates << " replicate(s), " << c.algorithm.sweeps
      << " sweeps\n  mean target crossings per sweep = " << format_double(res.crossings_per_sweep)
      << "\n  mean target first-cell occupancy = " << format_double(res.cell_fraction) << "\n";
  return res;
}

PointResult execute(const ExperimentConfig& c, std::ostream& out) {
  return c.algorithm.method == "smc" ? execute_smc(c, out) : execute_tempering(c, out);
}

std::optional<double> exact_min_gap(const AnnealedFamily& family, const KernelSpec& spec) {
  constexpr std::size_t max_cell = 2000;
  if (family.model().state_count() == 0 || family.model().state_count() > DiscreteSpace::max_states) return std::nullopt;
  const DiscreteSpace space(family);
  for (int c = 0; c < space.cell_count(); ++c) {
    if (space.cell_members(c).size() > max_cell) return std::nullopt;
  }
  double gap = 1.0;
  for (std::size_t v = 1; v <= family.stages(); ++v) {
    const Eigen::MatrixXd P = transition_matrix(RestrictedKernel(make_kernel(spec, family, v), family.model_ptr()), space);
    for (int c = 0; c < space.cell_count(); ++c) gap = std::min(gap, spectral_gap(cell_submatrix(P, space.cell_members(c))));
  }
  return gap;
}

int command_bounds(const ExperimentConfig& c, std::ostream& out) {
  const AnnealedFamily family = build_family(c.problem);
  const BoundsConfig b = c.bounds.value_or(BoundsConfig{});
  const std::size_t V = family.stages();
  if (V == 0) throw ConfigError("problem.betas", "bounds need at least one stage");

  BoundInputs in;
  in.epsilon = b.epsilon;
  in.stages = V;
  in.cells = static_cast<std::size_t>(family.partition().cell_count());
  const auto masses = try_exact_masses(family);
  std::optional<DensityRatioBounds> wz;
  try {
    wz = density_ratio_bounds(family);
  } catch (const std::exception&) {
  }
  auto pick = [](const std::optional<double>& given, std::optional<double> computed, const char* name) {
    if (given) return *given;
    if (!computed) throw ConfigError(std::string("bounds.") + name, "cannot be computed for this family; supply it");
    return *computed;
  };
  in.W = pick(b.W, wz ? std::optional<double>(wz->W) : std::nullopt, "W");
  in.Z = pick(b.Z, wz ? std::optional<double>(wz->Z) : std::nullopt, "Z");
  in.mu_star = pick(b.mu_star, masses ? std::optional<double>(mu_star(*masses)) : std::nullopt, "mu_star");
  const double gamma = pick(b.gamma, masses ? std::optional<double>(persistence(*masses)) : std::nullopt, "gamma");
  const double pis = pick(b.pi_star, masses ? std::optional<double>(pi_star(*masses)) : std::nullopt, "pi_star");

  json table;
  std::optional<double> delta, delta_se;
  const std::size_t n_states = family.model().state_count();
  if (n_states > 0 && n_states <= DiscreteSpace::max_states) {
    delta = overlap(DiscreteSpace(family));
  } else {
    try {
      const OverlapEstimate e = overlap_monte_carlo(family, 100000, c.algorithm.seed);
      delta = e.value;
      delta_se = e.standard_error;
    } catch (const std::exception&) {
    }
  }
  std::optional<double> gap = b.min_gap;
  if (!gap) gap = exact_min_gap(family, kernel_spec(c.algorithm));

  const ParticleBound pb = particle_bound(in);
  const double lambda = lambda_of(in.epsilon, V);
  table["epsilon"] = in.epsilon;
  table["V"] = V;
  table["p"] = in.cells;
  table["W"] = in.W;
  table["Z"] = in.Z;
  table["mu_star"] = in.mu_star;
  table["pi_star"] = pis;
  table["gamma"] = gamma;
  table["lambda"] = lambda;
  table["phi"] = phi(lambda);
  table["N"] = pb.particles;
  table["N_raw"] = pb.value;
  table["mutation_accuracy"] = pb.mutation_accuracy;
  table["warmness"] = pb.warmness;
  if (delta) table["delta"] = *delta;
  if (delta_se) table["delta_standard_error"] = *delta_se;
  table["delta_lower_bound"] = overlap_lower_bound(in.Z * in.W, gamma, pis);
  if (gap) {
    table["min_gap"] = *gap;
    if (*gap > 0.0) {
      table["t_warm"] = warm_t_bound(pb, *gap);
      table["t_gap"] = gap_based_t_bound(pb.particles, V, gamma, pis, *gap);
    }
  }

  out << "bounds for " << family.model().name() << " (V = " << V << ", p = " << in.cells << ")\n";
  auto row = [&out](const std::string& name, const std::string& value) {
    out << "  " << name << std::string(name.size() < 20 ? 20 - name.size() : 1, ' ') << value << "\n";
  };
  row("epsilon", format_double(in.epsilon));
  row("W", format_double(in.W));
  row("Z", format_double(in.Z));
  row("mu*", format_double(in.mu_star));
  row("pi*", format_double(pis));
  row("N", std::to_string(pb.particles));
  row("mutation accuracy", format_double(pb.mutation_accuracy));
  row("warmness", format_double(pb.warmness));
  if (gap && *gap > 0.0) {
    row("min gap", format_double(*gap));
    row("t (warm mixing)", std::to_string(table["t_warm"].get<std::uint64_t>()));
    row("t (gap, persistence)", std::to_string(table["t_gap"].get<std::uint64_t>()));
  } else {
    row("t", "n/a: no spectral gap (state space too large to enumerate; set bounds.min_gap)");
  }
  row("lambda", format_double(lambda));
  row("phi", format_double(phi(lambda)));
  row("gamma", format_double(gamma));
  row("delta", delta ? format_double(*delta) + (delta_se ? " +/- " + format_double(*delta_se) : "") : "n/a");
  row("delta lower bound", format_double(table["delta_lower_bound"].get<double>()));

  if (wants(c.output, "json")) {
    json s = base_summary("bounds", c);
    s["bounds"] = table;
    write_file(fs::path(c.output.directory) / "bounds.json", s.dump(2) + "\n");
  }
  return exit_ok;
}

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

int command_verify(const ExperimentConfig& c, std::ostream& out) {
  const AnnealedFamily family = build_family(c.problem);
  const DiscreteSpace space(family);
  const KernelSpec spec = kernel_spec(c.algorithm);
  const std::uint64_t seed = c.algorithm.seed;
  const std::size_t reps = c.algorithm.replicates > 1 ? c.algorithm.replicates : 0;
  const std::size_t V = space.stages();
  std::vector<Check> checks;

  std::vector<Eigen::MatrixXd> restricted;
  for (std::size_t v = 1; v <= V; ++v)
    restricted.push_back(transition_matrix(RestrictedKernel(make_kernel(spec, family, v), family.model_ptr()), space));

  {
    double worst = 0.0;
    for (std::size_t v = 1; v <= V; ++v) {
      for (int cell = 0; cell < space.cell_count(); ++cell) {
        const auto members = space.cell_members(cell);
        const auto target = space.conditional(v, cell);
        const Eigen::VectorXd pi = Eigen::Map<const Eigen::VectorXd>(target.data(), static_cast<Eigen::Index>(target.size()));
        const Eigen::VectorXd moved = cell_submatrix(restricted[v - 1], members).transpose() * pi;
        worst = std::max(worst, (moved - pi).cwiseAbs().maxCoeff());
      }
    }
    checks.push_back({"restricted-stationarity", worst <= 1e-10, "max deviation " + format_double(worst)});
  }

  std::size_t tau_max = 0;
  {
    bool ok = true, sized = true, connected = true;
    long worst_bound = 0;
    for (std::size_t v = 1; v <= V; ++v) {
      for (int cell = 0; cell < space.cell_count(); ++cell) {
        const auto members = space.cell_members(cell);
        if (members.size() > warm_mixing_max_states) {
          sized = false;
          continue;
        }
        if (members.size() > 1 && !(spectral_gap(cell_submatrix(restricted[v - 1], members)) > 0.0)) {
          connected = false;
          continue;
        }
        const WarmMixingResult w = verify_warm_mixing(space, restricted[v - 1], v, cell, 7.0, 1e-3);
        ok = ok && w.within_bound;
        tau_max = std::max(tau_max, w.tau);
        worst_bound = std::max(worst_bound, w.bound);
      }
    }
    std::string detail = "max tau " + std::to_string(tau_max) + ", max bound " + std::to_string(worst_bound);
    if (!sized) detail += "; a cell exceeds 16 states";
    if (!connected) detail += "; a restricted cell chain is reducible (zero gap)";
    checks.push_back({"warm-mixing-vs-gap-bound", ok && sized && connected, detail});
  }
  const std::size_t t = std::max<std::size_t>(tau_max + 1, c.algorithm.steps);

  const CellMassTable table = space.cell_mass_table();
  const double gamma = persistence(table), pis = pi_star(table), ms = mu_star(table);
  checks.push_back({"persistence-inequality", ms >= gamma * pis * (1.0 - 1e-12),
                    "mu* " + format_double(ms) + " vs gamma pi* " + format_double(gamma * pis)});
  const DensityRatioBounds wz = density_ratio_bounds(family);
  const double delta = overlap(space), lower = overlap_lower_bound(wz.W * wz.Z, gamma, pis);
  checks.push_back({"overlap-lower-bound", delta >= lower,
                    "delta " + format_double(delta) + " vs bound " + format_double(lower)});

  {
    bool ok = true;
    const int draws = 200000;
    std::size_t pairs = 0;
    for (std::size_t v = 0; v < V; ++v) {
      for (int cell = 0; cell < space.cell_count(); ++cell) {
        const auto f = space.conditional(v, cell), g = space.conditional(v + 1, cell);
        const CouplingMap cm(f, g, cell);
        Stream rng(seed, static_cast<std::uint32_t>(v), Phase::verify, static_cast<std::uint32_t>(cell));
        std::vector<double> cf(f.size(), 0.0), cg(f.size(), 0.0);
        double differ = 0.0;
        for (int i = 0; i < draws; ++i) {
          const CoupledPair pr = cm.draw(rng);
          cf[pr.x] += 1.0;
          cg[pr.x_bar] += 1.0;
          differ += pr.x != pr.x_bar;
        }
        auto close = [draws](double count, double prob) {
          return std::abs(count / draws - prob) <= 4.0 * std::sqrt(prob * (1.0 - prob) / draws) + 1e-12;
        };
        ok = ok && close(differ, tv_distance(f, g));
        for (std::size_t k = 0; k < f.size(); ++k) ok = ok && close(cf[k], f[k]) && close(cg[k], g[k]);
        ++pairs;
      }
    }
    checks.push_back({"coupling-map", ok, std::to_string(pairs) + " adjacent-stage pairs, 2e5 draws each"});
  }

  RunConfig rc{family};
  rc.kernel = spec;
  rc.steps = t;
  rc.seed = seed;
  rc.threads = c.algorithm.threads;
  {
    rc.particles = 500;
    const IdentityReport rep = verify_cond_exp_identity(space, rc, reps ? reps : 300);
    double worst = 0.0;
    std::size_t skipped = 0;
    for (const auto& s : rep.strata) {
      if (s.skipped) ++skipped;
      else worst = std::max(worst, std::abs(s.z));
    }
    checks.push_back({"cond-exp-identity", rep.pass(),
                      "max |z| " + format_double(worst) + ", skipped strata " + std::to_string(skipped)});
  }
  {
    rc.particles = 1000;
    const WarmnessReport w = verify_local_warmness(space, rc, reps ? reps : 50);
    double worst = 0.0;
    for (const auto& s : w.stages) worst = std::max(worst, s.max_ratio);
    checks.push_back({"local-warmness", w.below(7.0),
                      "max ratio " + format_double(worst) + ", extinction rate " + format_double(w.extinction_rate)});
  }
  {
    const ConcentrationReport r = verify_concentration(0.0, 1.0, 1000, 0.1, reps ? reps : 2000, seed);
    checks.push_back({"concentration", r.pass,
                      "rate " + format_double(r.rate) + " vs bound " + format_double(r.bound)});
  }
  {
    BoundInputs in;
    in.epsilon = 0.5;
    in.stages = V;
    in.cells = static_cast<std::size_t>(space.cell_count());
    in.W = wz.W;
    in.Z = wz.Z;
    in.mu_star = ms;
    const ParticleBound pb = particle_bound(in);
    const auto kernels = restricted_kernel_powers(space, spec, t);
    const double f = phi(lambda_of(0.5, V));
    const std::size_t seeds = reps ? reps : 50;
    std::size_t held = 0;
    for (std::size_t r = 0; r < seeds; ++r) {
      const CountRun run = simulate_counts(space, kernels, pb.particles, replicate_seed(seed, r));
      held += resampling_sandwich_holds(run.report, table, f);
    }
    const double frac = static_cast<double>(held) / static_cast<double>(seeds);
    checks.push_back({"resampling-sandwich", frac > 0.75,
                      "N " + std::to_string(pb.particles) + ", held in " + std::to_string(held) + "/" +
                          std::to_string(seeds)});
  }

  bool all = true;
  json results = json::array();
  out << "verify: " << family.model().name() << " family, V = " << V << ", t = " << t << "\n";
  for (const Check& ch : checks) {
    all = all && ch.pass;
    out << "  " << (ch.pass ? "PASS " : "FAIL ") << ch.name << std::string(ch.name.size() < 26 ? 26 - ch.name.size() : 1, ' ')
        << ch.detail << "\n";
    results.push_back({{"name", ch.name}, {"pass", ch.pass}, {"detail", ch.detail}});
  }
  if (wants(c.output, "json")) {
    json s = base_summary("verify", c);
    s["checks"] = results;
    s["all_pass"] = all;
    write_file(fs::path(c.output.directory) / "verify.json", s.dump(2) + "\n");
  }
  return all ? exit_ok : exit_checks_failed;
}

int command_sweep(const ExperimentConfig& c, std::ostream& out) {
  constexpr std::size_t max_points = 1000;
  const SweepConfig sweep = c.sweep.value_or(SweepConfig{});
  std::size_t points = sweep.axes.empty() ? 0 : 1;
  for (const auto& [key, values] : sweep.axes) {
    points *= values.size();
    if (points > max_points) throw ConfigError("sweep.axes", "grid exceeds 1000 points");
  }

  json base = to_json(c);
  base.erase("sweep");
  const fs::path dir = c.output.directory;
  std::vector<std::string> rows(points), logs(points);
  const int workers = static_cast<int>(sweep.workers > 0 ? sweep.workers
                                                         : (c.algorithm.threads > 0 ? static_cast<std::size_t>(c.algorithm.threads)
                                                                                    : static_cast<std::size_t>(omp_get_max_threads())));
  const auto n = static_cast<long>(points);

#pragma omp parallel for schedule(dynamic) num_threads(std::max(workers, 1))
  for (long i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    std::ostringstream row, log;
    json point = base;
    std::size_t rest = idx;
    std::vector<std::string> labels;
    for (auto it = sweep.axes.rbegin(); it != sweep.axes.rend(); ++it) {
      const std::size_t k = rest % it->second.size();
      rest /= it->second.size();
      labels.insert(labels.begin(), it->second[k].dump());
    }
    rest = idx;
    std::vector<std::size_t> choice(sweep.axes.size());
    for (std::size_t a = sweep.axes.size(); a-- > 0;) {
      choice[a] = rest % sweep.axes[a].second.size();
      rest /= sweep.axes[a].second.size();
    }
    char name[32];
    std::snprintf(name, sizeof name, "point-%03zu", idx);
    row << idx;
    for (const auto& l : labels) row << ",\"" << std::string(l.begin(), l.end()) << "\"";
    std::string status = "ok";
    PointResult res;
    std::uint64_t seed = 0;
    std::string hash;
    try {
      for (std::size_t a = 0; a < sweep.axes.size(); ++a)
        set_path(point, sweep.axes[a].first, sweep.axes[a].second[choice[a]]);
      point["algorithm"]["threads"] = 1;
      point["output"]["directory"] = (dir / name).string();
      const ExperimentConfig pc = parse_config(point);
      seed = pc.algorithm.seed;
      hash = config_hash(pc);
      res = execute(pc, log);
    } catch (const WeightCollapse& e) {
      status = "weight collapse at stage " + std::to_string(e.stage());
    } catch (const std::exception& e) {
      status = std::string("error: ") + e.what();
    }
    std::replace(status.begin(), status.end(), '"', '\'');
    row << ',' << format_double(res.log_z) << ',' << format_double(res.cell_fraction) << ','
        << format_double(res.tracking_error) << ',' << format_double(res.crossings_per_sweep) << ',' << hash << ','
        << seed << ",\"" << status << "\"\n";
    rows[idx] = row.str();
    logs[idx] = std::string(name) + ": " + status + "\n" + log.str();
  }

  std::ostringstream csv;
  csv << "point";
  for (const auto& [key, values] : sweep.axes) csv << ',' << key;
  csv << ",log_z,first_cell_fraction,max_tracking_error,crossings_per_sweep,config_hash,seed,status\n";
  for (const auto& r : rows) csv << r;
  write_file(dir / "sweep.csv", csv.str());
  for (const auto& l : logs) out << l;
  out << "sweep: " << points << " point(s) written to " << (dir / "sweep.csv").string() << "\n";
  return exit_ok;
}

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "Experiment config (JSON)");
  sub->add_option("--seed", o.seed, "Master seed, overrides the config");
  sub->add_option("--out", o.out, "Output directory, overrides the config");
  sub->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  sub->add_option("--replicates", o.replicates, "Independent replicates");
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Partition-restricted sequential Monte Carlo for multimodal targets", "psmc"};
  app.require_subcommand(1);
  Overrides o;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"run-smc", "Run the restricted SMC sampler"},
      {"run-pt", "Run parallel tempering"},
      {"run-st", "Run simulated tempering"},
      {"bounds", "Evaluate particle and mutation bounds"},
      {"verify", "Run the exact verification suite on an enumerable family"},
      {"sweep", "Run a parameter grid"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), o);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return exit_config;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    ExperimentConfig c = effective_config(o);
    if (cmd == "run-smc") {
      c.algorithm.method = "smc";
      if (c.algorithm.particles == 0) throw ConfigError("algorithm.particles", "required field is missing");
      execute_smc(c, out);
      return exit_ok;
    }
    if (cmd == "run-pt" || cmd == "run-st") {
      c.algorithm.method = cmd == "run-pt" ? "pt" : "st";
      if (c.algorithm.sweeps == 0) throw ConfigError("algorithm.sweeps", "required field is missing");
      execute_tempering(c, out);
      return exit_ok;
    }
    if (cmd == "bounds") return command_bounds(c, out);
    if (cmd == "verify") return command_verify(c, out);
    return command_sweep(c, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const WeightCollapse& e) {
    err << "runtime error: weight collapse at stage " << e.stage() << "\n";
    return exit_weight_collapse;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return exit_runtime;
  }
}

}  // namespace psmc::cli
