#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "otsmc/config.hpp"
#include "otsmc/errors.hpp"

using namespace otsmc;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
  int code;
  std::string err;
};

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("otsmc_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

Result cli(const std::string& args, const std::string& env = "") {
  const fs::path err = scratch("stderr.txt");
  const std::string cmd =
      env + " " + std::string(OTSMC_CLI_PATH) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  std::ifstream in(err);
  std::stringstream text;
  text << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text.str()};
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file);
  REQUIRE(in);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string config_error_key(const json& j) {
  try {
    RunConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

}  // namespace

TEST_CASE("config parsing rejects bad keys and values") {
  CHECK(config_error_key(json::object()) == "");
  CHECK(config_error_key({{"partciles", 10}}) == "partciles");
  CHECK(config_error_key({{"xi", 1.5}}) == "xi");
  CHECK(config_error_key({{"xi", 0.0}}) == "xi");
  CHECK(config_error_key({{"gamma", -1.0}}) == "gamma");
  CHECK(config_error_key({{"n", 1}}) == "n");
  CHECK(config_error_key({{"n", "many"}}) == "n");
  CHECK(config_error_key({{"n_list", json::array()}}) == "n_list");
  CHECK(config_error_key({{"method", "pf"}}) == "method");
  CHECK(config_error_key({{"scheme", "residual"}}) == "scheme");
  CHECK(config_error_key({{"oracle_length", 500}}) == "oracle_length");
  CHECK(config_error_key({{"model", "heat"}}) == "model");
}

TEST_CASE("config echo round trips") {
  RunConfig c = RunConfig::from_json({{"model", "pde"}, {"grid", 7}, {"xi", 0.4}, {"method", "smc"}, {"p_list", {0, 3}}});
  const RunConfig back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.pde.grid == 7);
  CHECK(back.xi == 0.4);
  CHECK(!c.to_json().contains("output"));
  CHECK(!c.to_json().contains("threads"));
  CHECK(!RunConfig{}.to_json().contains("grid"));
}

TEST_CASE("fixture round trip") {
  EllipticConfig cfg;
  cfg.grid = 5;
  cfg.data_seed = 3;
  const EllipticData data = EllipticInverse::make_synthetic_data(cfg);
  const fs::path dir = scratch("fixture");
  write_fixture(dir, cfg, data);
  const auto [cfg2, data2] = read_fixture(dir);
  CHECK(cfg2.grid == 5);
  CHECK(data2.data == data.data);
  CHECK(data2.truth == data.truth);
  CHECK(data2.noise_std == data.noise_std);
}

TEST_CASE("exit codes") {
  const fs::path out = scratch("codes");
  CHECK(cli("run --n 16 --dim 3 --output " + out.string()).code == 0);

  const Result bad_xi = cli("run --xi 1.5 --output " + out.string());
  CHECK(bad_xi.code == 2);
  CHECK(bad_xi.err.find("xi must lie in (0,1)") != std::string::npos);

  const Result unknown_flag = cli("run --particles 10");
  CHECK(unknown_flag.code == 2);

  const Result missing_moments = cli("run --model pde --grid 4 --n 8 --moments /nonexistent.json");
  CHECK(missing_moments.code == 2);
  CHECK(missing_moments.err.find("[moments]") != std::string::npos);

  // Output path is an existing regular file: a runtime failure, not a config error.
  const fs::path blocker = scratch("blocker");
  std::ofstream(blocker) << "x";
  CHECK(cli("run --n 8 --dim 2 --output " + blocker.string()).code == 3);
}

TEST_CASE("run outputs are bit-identical across reruns and thread counts") {
  const std::string common = "--model gaussian --dim 4 --n 64 --p 2 --seed 17";
  const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
  REQUIRE(cli("run " + common + " --threads 1 --output " + a.string()).code == 0);
  REQUIRE(cli("run " + common + " --threads 1 --output " + b.string()).code == 0);
  REQUIRE(cli("run " + common + " --threads 4 --output " + c.string()).code == 0);
  for (const char* f : {"trace.csv", "ensemble.csv", "summary.json"}) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
    CHECK(slurp(a / f) == slurp(c / f));
  }
}

TEST_CASE("summary.json reruns the same experiment") {
  const fs::path a = scratch("resume_a"), b = scratch("resume_b");
  REQUIRE(cli("run --dim 3 --n 32 --p 1 --method smc --seed 5 --output " + a.string()).code == 0);
  REQUIRE(cli("run --config " + (a / "summary.json").string() + " --output " + b.string()).code == 0);
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  CHECK(slurp(a / "ensemble.csv") == slurp(b / "ensemble.csv"));
  const json s = json::parse(slurp(a / "summary.json"));
  CHECK(s.at("seed") == 5);
  CHECK(s.at("config").at("method") == "smc");
  CHECK(s.at("metrics").contains("variance_ratio"));
}

TEST_CASE("output directory precedence") {
  const fs::path env_dir = scratch("env_out"), flag_dir = scratch("flag_out");
  REQUIRE(cli("run --dim 2 --n 8", "OTSMC_OUTPUT_DIR=" + env_dir.string()).code == 0);
  CHECK(fs::exists(env_dir / "summary.json"));
  REQUIRE(cli("run --dim 2 --n 8 --output " + flag_dir.string(), "OTSMC_OUTPUT_DIR=" + env_dir.string() + "_unused").code == 0);
  CHECK(fs::exists(flag_dir / "summary.json"));
  CHECK(!fs::exists(env_dir.string() + "_unused"));
}

TEST_CASE("compare and oracle commands") {
  const fs::path cmp = scratch("compare"), orc = scratch("oracle");
  REQUIRE(cli("compare --dim 3 --n-list 16,32 --p-list 0 --n-runs 2 --threads 2 --output " + cmp.string()).code == 0);
  const std::string agg = slurp(cmp / "aggregate.csv");
  CHECK(std::count(agg.begin(), agg.end(), '\n') == 5);  // header + 2 methods x 2 sizes

  REQUIRE(cli("oracle --model pde --grid 4 --oracle-length 10000 --output " + orc.string()).code == 0);
  std::ifstream in(orc / "moments.json");
  const ReferenceMoments ref = read_moments_json(in);
  CHECK(ref.chain_length == 10000);
  CHECK(ref.mean.size() == 16);
}

TEST_CASE("committed elliptic fixture matches regeneration") {
  const auto [cfg, data] = read_fixture(fs::path(OTSMC_SOURCE_DIR) / "fixtures" / "pde_default");
  const EllipticData fresh = EllipticInverse::make_synthetic_data(EllipticConfig{});
  CHECK(cfg.grid == 10);
  CHECK((data.data - fresh.data).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((data.truth - fresh.truth).cwiseAbs().maxCoeff() <= 1e-15);
  std::ifstream in(fs::path(OTSMC_SOURCE_DIR) / "fixtures" / "pde_default" / "moments.json");
  const ReferenceMoments ref = read_moments_json(in);
  CHECK(ref.mean.size() == 100);
  CHECK(ref.chain_length == 200000);
}

TEST_CASE("shipped configurations parse") {
  for (const char* name : {"toy_compare.json", "pde_compare.json"}) {
    CAPTURE(name);
    std::ifstream in(fs::path(OTSMC_SOURCE_DIR) / "configs" / name);
    REQUIRE(in);
    CHECK_NOTHROW(RunConfig::from_json(json::parse(in)));
  }
}
