#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "psmc/distributions.hpp"

namespace psmc::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_checks_failed = 1,
  exit_config = 2,
  exit_weight_collapse = 3,
  exit_runtime = 4,
};

/// Schema violation; `path()` is the dotted field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct ProblemConfig {
  std::string family = "reference";  // reference | ising | gaussian-mixture | discrete
  std::size_t dimension = 0;
  double alpha = 1.0;
  double weight = 0.5;
  double nu = 1.0;
  double sigma = 1.0;
  std::vector<double> log_q;
  std::vector<int> labels;
  std::string schedule;  // linear | geometric | explicit; empty picks the family default
  std::vector<double> betas;
  std::optional<bool> uniform_start;
  bool operator==(const ProblemConfig&) const = default;
};

struct AlgorithmConfig {
  std::string method = "smc";  // smc | pt | st
  std::size_t particles = 0;
  std::size_t steps = 10;
  std::size_t sweeps = 0;
  std::uint64_t seed = 0;
  std::size_t replicates = 1;
  std::string kernel = "auto";
  double step_variance = 0.0;
  bool restricted = true;
  std::string engine = "parallel";
  int threads = 0;
  std::size_t pseudo_prior_particles = 1000;
  std::vector<double> log_pseudo_priors;
  bool operator==(const AlgorithmConfig&) const = default;
};

struct BoundsConfig {
  double epsilon = 0.25;
  std::optional<double> W;
  std::optional<double> Z;
  std::optional<double> mu_star;
  std::optional<double> gamma;
  std::optional<double> pi_star;
  std::optional<double> min_gap;
  bool operator==(const BoundsConfig&) const = default;
};

struct OutputConfig {
  std::string directory = "out";
  std::vector<std::string> formats{"csv", "json"};  // "trace" adds per-sweep traces for PT/ST
  bool operator==(const OutputConfig&) const = default;
};

struct SweepConfig {
  /// Dotted config path and the values it takes; the grid is their product.
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;
  std::size_t workers = 0;
  bool operator==(const SweepConfig&) const = default;
};

struct ExperimentConfig {
  ProblemConfig problem;
  AlgorithmConfig algorithm;
  std::optional<BoundsConfig> bounds;
  OutputConfig output;
  std::optional<SweepConfig> sweep;
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// FNV-1a of the canonical config, excluding thread count and output block,
/// as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

AnnealedFamily build_family(const ProblemConfig& problem);

/// Sets a dotted path inside a JSON config, creating objects as needed.
void set_path(nlohmann::json& j, const std::string& dotted, const nlohmann::json& value);

/// Entry point of the psmc tool; `args` excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace psmc::cli
