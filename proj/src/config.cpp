#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <type_traits>

#include "psmc/cli.hpp"
#include "psmc/discrete_space.hpp"

namespace psmc::cli {

using nlohmann::json;

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t fields are read as 64-bit unsigned");

namespace {

/// Typed access to one JSON object that remembers its dotted path and
/// rejects keys it was never asked about.
class Block {
 public:
  Block(const json& j, std::string path, std::set<std::string> allowed) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    for (const auto& [key, value] : j_.items()) {
      if (!allowed.count(key)) throw ConfigError(child(key), "unknown key");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const json& at(const std::string& key) const { return j_.at(key); }

  void require(const std::string& key) const {
    if (!has(key)) throw ConfigError(child(key), "required field is missing");
  }

  void get(const std::string& key, std::string& out) const {
    if (!has(key)) return;
    if (!at(key).is_string()) throw ConfigError(child(key), "expected a string");
    out = at(key).get<std::string>();
  }
  void get(const std::string& key, double& out) const {
    if (!has(key)) return;
    if (!at(key).is_number()) throw ConfigError(child(key), "expected a number");
    out = at(key).get<double>();
    if (!std::isfinite(out)) throw ConfigError(child(key), "expected a finite number");
  }
  void get(const std::string& key, std::optional<double>& out) const {
    if (!has(key)) return;
    double v = 0.0;
    get(key, v);
    out = v;
  }
  void get(const std::string& key, bool& out) const {
    if (!has(key)) return;
    if (!at(key).is_boolean()) throw ConfigError(child(key), "expected true or false");
    out = at(key).get<bool>();
  }
  void get(const std::string& key, std::optional<bool>& out) const {
    if (!has(key)) return;
    bool v = false;
    get(key, v);
    out = v;
  }
  void get(const std::string& key, std::uint64_t& out) const {
    if (!has(key)) return;
    const json& v = at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ConfigError(child(key), "expected a non-negative integer");
    out = at(key).get<std::uint64_t>();
  }
  void get(const std::string& key, int& out) const {
    if (!has(key)) return;
    if (!at(key).is_number_integer()) throw ConfigError(child(key), "expected an integer");
    out = at(key).get<int>();
  }
  void get(const std::string& key, std::vector<double>& out) const {
    if (!has(key)) return;
    if (!at(key).is_array()) throw ConfigError(child(key), "expected an array of numbers");
    out.clear();
    for (std::size_t i = 0; i < at(key).size(); ++i) {
      const json& e = at(key)[i];
      if (!e.is_number()) throw ConfigError(child(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(e.get<double>());
    }
  }
  void get(const std::string& key, std::vector<int>& out) const {
    if (!has(key)) return;
    if (!at(key).is_array()) throw ConfigError(child(key), "expected an array of integers");
    out.clear();
    for (std::size_t i = 0; i < at(key).size(); ++i) {
      const json& e = at(key)[i];
      if (!e.is_number_integer()) throw ConfigError(child(key) + "[" + std::to_string(i) + "]", "expected an integer");
      out.push_back(e.get<int>());
    }
  }
  void get(const std::string& key, std::vector<std::string>& out) const {
    if (!has(key)) return;
    if (!at(key).is_array()) throw ConfigError(child(key), "expected an array of strings");
    out.clear();
    for (std::size_t i = 0; i < at(key).size(); ++i) {
      const json& e = at(key)[i];
      if (!e.is_string()) throw ConfigError(child(key) + "[" + std::to_string(i) + "]", "expected a string");
      out.push_back(e.get<std::string>());
    }
  }

  void one_of(const std::string& key, const std::string& value, std::initializer_list<const char*> options) const {
    for (const char* o : options) {
      if (value == o) return;
    }
    std::string list;
    for (const char* o : options) list += std::string(list.empty() ? "" : ", ") + o;
    throw ConfigError(child(key), "'" + value + "' is not one of: " + list);
  }

 private:
  const json& j_;
  std::string path_;
};

ProblemConfig parse_problem(const json& j) {
  const Block b(j, "problem",
                {"family", "dimension", "alpha", "weight", "nu", "sigma", "log_q", "labels", "schedule", "betas",
                 "uniform_start"});
  ProblemConfig p;
  b.get("family", p.family);
  b.one_of("family", p.family, {"reference", "ising", "gaussian-mixture", "discrete"});
  b.get("dimension", p.dimension);
  b.get("alpha", p.alpha);
  b.get("weight", p.weight);
  b.get("nu", p.nu);
  b.get("sigma", p.sigma);
  b.get("log_q", p.log_q);
  b.get("labels", p.labels);
  b.get("schedule", p.schedule);
  if (!p.schedule.empty()) b.one_of("schedule", p.schedule, {"linear", "geometric", "explicit"});
  b.get("betas", p.betas);
  b.get("uniform_start", p.uniform_start);
  if (p.family == "ising" || p.family == "gaussian-mixture") {
    b.require("dimension");
    if (p.dimension == 0) throw ConfigError("problem.dimension", "must be at least 1");
  }
  if (p.family == "discrete") {
    b.require("log_q");
    b.require("labels");
    if (p.log_q.size() != p.labels.size()) throw ConfigError("problem.labels", "needs one label per log_q entry");
  }
  if (p.schedule == "explicit") b.require("betas");
  return p;
}

AlgorithmConfig parse_algorithm(const json& j) {
  const Block b(j, "algorithm",
                {"method", "particles", "steps", "sweeps", "seed", "replicates", "kernel", "step_variance",
                 "restricted", "engine", "threads", "pseudo_prior_particles", "log_pseudo_priors"});
  AlgorithmConfig a;
  b.get("method", a.method);
  b.one_of("method", a.method, {"smc", "pt", "st"});
  b.get("particles", a.particles);
  b.get("steps", a.steps);
  b.get("sweeps", a.sweeps);
  b.get("seed", a.seed);
  b.get("replicates", a.replicates);
  b.get("kernel", a.kernel);
  b.one_of("kernel", a.kernel, {"auto", "random-walk", "single-site-flip", "path-walk", "identity"});
  b.get("step_variance", a.step_variance);
  b.get("restricted", a.restricted);
  b.get("engine", a.engine);
  b.one_of("engine", a.engine, {"parallel", "serial"});
  b.get("threads", a.threads);
  b.get("pseudo_prior_particles", a.pseudo_prior_particles);
  b.get("log_pseudo_priors", a.log_pseudo_priors);
  if (a.method == "smc") {
    b.require("particles");
    if (a.particles == 0) throw ConfigError("algorithm.particles", "must be at least 1");
  } else {
    b.require("sweeps");
  }
  if (a.replicates == 0) throw ConfigError("algorithm.replicates", "must be at least 1");
  if (a.threads < 0) throw ConfigError("algorithm.threads", "must be non-negative");
  return a;
}

BoundsConfig parse_bounds(const json& j) {
  const Block b(j, "bounds", {"epsilon", "W", "Z", "mu_star", "gamma", "pi_star", "min_gap"});
  BoundsConfig c;
  b.get("epsilon", c.epsilon);
  b.get("W", c.W);
  b.get("Z", c.Z);
  b.get("mu_star", c.mu_star);
  b.get("gamma", c.gamma);
  b.get("pi_star", c.pi_star);
  b.get("min_gap", c.min_gap);
  if (!(c.epsilon > 0.0 && c.epsilon <= 0.5)) throw ConfigError("bounds.epsilon", "must lie in (0, 1/2]");
  return c;
}

OutputConfig parse_output(const json& j) {
  const Block b(j, "output", {"directory", "formats"});
  OutputConfig o;
  b.get("directory", o.directory);
  b.get("formats", o.formats);
  for (std::size_t i = 0; i < o.formats.size(); ++i) {
    const std::string& f = o.formats[i];
    if (f != "csv" && f != "json" && f != "trace")
      throw ConfigError("output.formats[" + std::to_string(i) + "]", "'" + f + "' is not one of: csv, json, trace");
  }
  return o;
}

SweepConfig parse_sweep(const json& j) {
  const Block b(j, "sweep", {"axes", "workers"});
  SweepConfig s;
  b.get("workers", s.workers);
  if (b.has("axes")) {
    const json& axes = b.at("axes");
    if (!axes.is_object()) throw ConfigError("sweep.axes", "expected an object of path -> values");
    for (const auto& [key, values] : axes.items()) {
      if (!values.is_array()) throw ConfigError("sweep.axes." + key, "expected an array of values");
      if (key.rfind("problem.", 0) != 0 && key.rfind("algorithm.", 0) != 0 && key.rfind("bounds.", 0) != 0)
        throw ConfigError("sweep.axes." + key, "only problem, algorithm and bounds fields can be swept");
      s.axes.emplace_back(key, std::vector<json>(values.begin(), values.end()));
    }
  }
  return s;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  const Block root(j, "", {"problem", "algorithm", "bounds", "output", "sweep"});
  root.require("algorithm");
  ExperimentConfig c;
  if (root.has("problem")) c.problem = parse_problem(root.at("problem"));
  c.algorithm = parse_algorithm(root.at("algorithm"));
  if (root.has("bounds")) c.bounds = parse_bounds(root.at("bounds"));
  if (root.has("output")) c.output = parse_output(root.at("output"));
  if (root.has("sweep")) c.sweep = parse_sweep(root.at("sweep"));
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  const ProblemConfig& p = c.problem;
  json& pj = j["problem"];
  pj["family"] = p.family;
  if (p.dimension > 0) pj["dimension"] = p.dimension;
  pj["alpha"] = p.alpha;
  pj["weight"] = p.weight;
  pj["nu"] = p.nu;
  pj["sigma"] = p.sigma;
  if (!p.log_q.empty()) pj["log_q"] = p.log_q;
  if (!p.labels.empty()) pj["labels"] = p.labels;
  if (!p.schedule.empty()) pj["schedule"] = p.schedule;
  if (!p.betas.empty()) pj["betas"] = p.betas;
  if (p.uniform_start) pj["uniform_start"] = *p.uniform_start;

  const AlgorithmConfig& a = c.algorithm;
  json& aj = j["algorithm"];
  aj["method"] = a.method;
  aj["particles"] = a.particles;
  aj["steps"] = a.steps;
  aj["sweeps"] = a.sweeps;
  aj["seed"] = a.seed;
  aj["replicates"] = a.replicates;
  aj["kernel"] = a.kernel;
  aj["step_variance"] = a.step_variance;
  aj["restricted"] = a.restricted;
  aj["engine"] = a.engine;
  aj["threads"] = a.threads;
  aj["pseudo_prior_particles"] = a.pseudo_prior_particles;
  if (!a.log_pseudo_priors.empty()) aj["log_pseudo_priors"] = a.log_pseudo_priors;

  if (c.bounds) {
    json& bj = j["bounds"];
    bj["epsilon"] = c.bounds->epsilon;
    auto opt = [&bj](const char* k, const std::optional<double>& v) {
      if (v) bj[k] = *v;
    };
    opt("W", c.bounds->W);
    opt("Z", c.bounds->Z);
    opt("mu_star", c.bounds->mu_star);
    opt("gamma", c.bounds->gamma);
    opt("pi_star", c.bounds->pi_star);
    opt("min_gap", c.bounds->min_gap);
  }
  j["output"]["directory"] = c.output.directory;
  j["output"]["formats"] = c.output.formats;
  if (c.sweep) {
    json& sj = j["sweep"];
    sj["workers"] = c.sweep->workers;
    sj["axes"] = json::object();
    for (const auto& [key, values] : c.sweep->axes) sj["axes"][key] = values;
  }
  return j;
}

std::string config_hash(const ExperimentConfig& config) {
  json j = to_json(config);
  j["algorithm"].erase("threads");
  j.erase("output");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

AnnealedFamily build_family(const ProblemConfig& p) {
  try {
    if (p.family == "reference") {
      if (p.schedule.empty()) return DiscreteSpace::reference_family();
      const AnnealedFamily ref = DiscreteSpace::reference_family();
      if (p.schedule != "explicit") throw ConfigError("problem.schedule", "the reference family takes explicit betas only");
      return AnnealedFamily(ref.model_ptr(), p.betas);
    }

    ModelPtr model;
    std::string schedule = p.schedule;
    bool uniform = false;
    if (p.family == "ising") {
      model = ising_target(p.dimension, p.alpha);
      if (schedule.empty()) schedule = "linear";
      uniform = p.uniform_start.value_or(true);
    } else if (p.family == "gaussian-mixture") {
      model = gaussian_mixture_target(p.dimension, p.weight, p.nu, p.sigma);
      if (schedule.empty()) schedule = "geometric";
      uniform = p.uniform_start.value_or(false);
      if (uniform) throw ConfigError("problem.uniform_start", "continuous families cannot start from beta = 0");
    } else {
      model = discrete_target(p.log_q, p.labels);
      if (schedule.empty()) schedule = "explicit";
      uniform = p.uniform_start.value_or(false);
    }

    std::vector<double> betas;
    if (schedule == "explicit") {
      if (p.betas.empty()) throw ConfigError("problem.betas", "required field is missing");
      betas = p.betas;
    } else {
      const std::size_t d = p.dimension > 0 ? p.dimension : model->dimension();
      betas = schedule == "linear" ? linear_schedule(d) : geometric_schedule(d);
    }
    return uniform ? AnnealedFamily::with_uniform_start(model, betas) : AnnealedFamily(model, betas);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("problem", e.what());
  }
}

void set_path(json& j, const std::string& dotted, const json& value) {
  json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError(dotted, "malformed path");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (!node->is_object() && !node->is_null()) throw ConfigError(dotted, "path crosses a non-object value");
    start = dot + 1;
  }
}

}  // namespace psmc::cli
