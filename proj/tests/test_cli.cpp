#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "psmc/cli.hpp"

using namespace psmc::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("psmc_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

int invoke(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int rc = run_command(args, out, err);
  if (err_text) *err_text = err.str();
  return rc;
}

}  // namespace

TEST_CASE("config round-trips through JSON") {
  json j = {{"problem", {{"family", "ising"}, {"dimension", 9}, {"alpha", 0.8}}},
            {"algorithm", {{"particles", 500}, {"steps", 4}, {"seed", 17}, {"threads", 2}}},
            {"bounds", {{"epsilon", 0.1}, {"min_gap", 0.02}}},
            {"output", {{"directory", "x"}, {"formats", {"csv"}}}},
            {"sweep", {{"axes", {{"algorithm.particles", {100, 200}}}}}}};
  const ExperimentConfig c = parse_config(j);
  CHECK(c.problem.dimension == 9);
  CHECK(c.algorithm.seed == 17);
  REQUIRE(c.bounds);
  CHECK(*c.bounds->min_gap == 0.02);
  CHECK(parse_config(to_json(c)) == c);
}

TEST_CASE("config hash ignores threads and output but not the seed") {
  ExperimentConfig a;
  a.algorithm.particles = 100;
  ExperimentConfig b = a;
  b.algorithm.threads = 7;
  b.output.directory = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.algorithm.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("schema violations name the offending field") {
  CHECK_THROWS_WITH_AS(parse_config(json::object()), doctest::Contains("algorithm"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(json{{"algorithm", {{"particels", 5}}}}), doctest::Contains("algorithm.particels"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(json{{"extra", 1}}), doctest::Contains("extra"), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"algorithm", {{"particles", -3}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"bounds", {{"epsilon", 0.7}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"problem", {{"family", "ising"}}}, {"algorithm", {{"particles", 5}}}}),
                  ConfigError);
}

TEST_CASE("config errors exit with code 2 and the field path") {
  const fs::path dir = scratch("errors");
  std::string err;
  const fs::path unknown = write_config(dir, {{"algorithm", {{"particles", 10}, {"bogus", true}}}});
  CHECK(invoke({"run-smc", "--config", unknown.string()}, &err) == exit_config);
  CHECK(err.find("algorithm.bogus") != std::string::npos);

  const fs::path missing = write_config(dir, {{"algorithm", {{"steps", 3}}}});
  CHECK(invoke({"run-smc", "--config", missing.string()}, &err) == exit_config);
  CHECK(err.find("algorithm.particles") != std::string::npos);

  CHECK(invoke({"run-smc", "--nonsense"}) == exit_config);
  CHECK(invoke({}) == exit_config);
  CHECK(invoke({"--help"}) == exit_ok);
}

TEST_CASE("run-smc writes a diagnostics bundle") {
  const fs::path dir = scratch("smc");
  CHECK(invoke({"run-smc", "--out", dir.string(), "--seed", "9", "--replicates", "2"}) == exit_ok);
  const std::string csv = slurp(dir / "diagnostics.csv");
  CHECK(csv.rfind("stage,cell,w_hat,p_hat,occupancy_before,occupancy_after,log_z_increment,config_hash,seed\n", 0) ==
        0);
  const json s = json::parse(slurp(dir / "summary.json"));
  CHECK(s["replicates"].size() == 2);
  CHECK(s["config"]["algorithm"]["seed"] == 9);
  CHECK(s.contains("code_version"));
  CHECK(s["exact"]["log_z"].get<double>() == doctest::Approx(s["aggregate"]["mean_log_z"].get<double>()).epsilon(0.1));
  CHECK(fs::exists(dir / "timing.csv"));
}

TEST_CASE("diagnostics are byte-identical across thread counts") {
  const fs::path dir = scratch("threads");
  json j = {{"problem", {{"family", "ising"}, {"dimension", 9}}}, {"algorithm", {{"particles", 400}, {"seed", 21}}}};
  std::vector<std::string> files;
  for (int threads : {1, 4}) {
    j["output"] = {{"directory", (dir / std::to_string(threads)).string()}};
    const fs::path cfg = write_config(dir, j);
    REQUIRE(invoke({"run-smc", "--config", cfg.string(), "--threads", std::to_string(threads)}) == exit_ok);
    files.push_back(slurp(dir / std::to_string(threads) / "diagnostics.csv"));
  }
  CHECK(files[0] == files[1]);
  CHECK(!files[0].empty());
}

TEST_CASE("bounds reports the particle bound and writes bounds.json") {
  const fs::path dir = scratch("bounds");
  const fs::path cfg = write_config(dir, {{"algorithm", {{"particles", 10}}},
                                          {"bounds", {{"epsilon", 0.5}}},
                                          {"output", {{"directory", dir.string()}}}});
  CHECK(invoke({"bounds", "--config", cfg.string()}) == exit_ok);
  const json b = json::parse(slurp(dir / "bounds.json"))["bounds"];
  CHECK(b["N"].get<std::uint64_t>() > 0);
  CHECK(b["lambda"].get<double>() == doctest::Approx(0.5 / 72.0));
  CHECK(b.contains("t_warm"));
  CHECK(b["delta"].get<double>() >= b["delta_lower_bound"].get<double>());

  const fs::path big = write_config(dir, {{"problem", {{"family", "gaussian-mixture"}, {"dimension", 4}}},
                                          {"algorithm", {{"particles", 10}}},
                                          {"output", {{"directory", (dir / "g").string()}}}});
  CHECK(invoke({"bounds", "--config", big.string()}) == exit_ok);
  const json g = json::parse(slurp(dir / "g" / "bounds.json"))["bounds"];
  CHECK(!g.contains("t_warm"));
  CHECK(g.contains("delta_standard_error"));
}

TEST_CASE("verify passes on the reference family") {
  const fs::path dir = scratch("verify");
  CHECK(invoke({"verify", "--out", dir.string()}) == exit_ok);
  const json v = json::parse(slurp(dir / "verify.json"));
  CHECK(v["all_pass"] == true);
  CHECK(v["checks"].size() == 9);
}

TEST_CASE("tempering commands write summaries") {
  const fs::path dir = scratch("tempering");
  const fs::path cfg = write_config(dir, {{"algorithm", {{"method", "pt"}, {"sweeps", 2000}, {"seed", 2}}},
                                          {"output", {{"directory", dir.string()}, {"formats", {"json", "trace"}}}}});
  CHECK(invoke({"run-pt", "--config", cfg.string()}) == exit_ok);
  CHECK(json::parse(slurp(dir / "summary.json"))["replicates"][0].contains("swap_acceptance"));
  CHECK(invoke({"run-st", "--config", cfg.string()}) == exit_ok);
  CHECK(json::parse(slurp(dir / "summary.json"))["replicates"][0].contains("level_occupancy"));
  CHECK(fs::exists(dir / "trace.csv"));
  const fs::path none = write_config(dir, {{"algorithm", {{"particles", 10}}}});
  CHECK(invoke({"run-pt", "--config", none.string()}) == exit_config);
}

TEST_CASE("sweep runs the grid and tolerates an empty one") {
  const fs::path dir = scratch("sweep");
  const fs::path empty = write_config(dir, {{"algorithm", {{"particles", 100}}},
                                            {"sweep", {{"axes", {{"algorithm.particles", json::array()}}}}},
                                            {"output", {{"directory", (dir / "e").string()}}}});
  CHECK(invoke({"sweep", "--config", empty.string()}) == exit_ok);
  CHECK(slurp(dir / "e" / "sweep.csv").find('\n') == slurp(dir / "e" / "sweep.csv").size() - 1);

  const fs::path grid = write_config(
      dir, {{"algorithm", {{"particles", 100}}},
            {"sweep", {{"axes", {{"algorithm.particles", {100, 200}}, {"algorithm.seed", {1, 2, 3}}}}, {"workers", 3}}},
            {"output", {{"directory", (dir / "g").string()}}}});
  CHECK(invoke({"sweep", "--config", grid.string()}) == exit_ok);
  const std::string csv = slurp(dir / "g" / "sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  CHECK(csv.find("\"ok\"") != std::string::npos);
  CHECK(fs::exists(dir / "g" / "point-005" / "diagnostics.csv"));

  const fs::path huge = write_config(
      dir, {{"algorithm", {{"particles", 10}}},
            {"sweep", {{"axes", {{"algorithm.seed", json(std::vector<int>(40, 1))},
                                 {"algorithm.steps", json(std::vector<int>(40, 1))}}}}}});
  CHECK(invoke({"sweep", "--config", huge.string()}) == exit_config);
}
