// otsmc command-line front end: run, compare, oracle, fixture.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "otsmc/config.hpp"
#include "otsmc/diagnostics.hpp"
#include "otsmc/errors.hpp"
#include "otsmc/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace otsmc;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

const char* const kListKeys[] = {"methods", "n_list", "p_list"};

bool is_list_key(const std::string& key) {
  for (const char* k : kListKeys)
    if (key == k) return true;
  return false;
}

// A flag value becomes a JSON number when it parses as one, otherwise a string.
json scalar_from_text(const std::string& text) {
  json v = json::parse(text, nullptr, false);
  if (!v.is_discarded() && v.is_number()) return v;
  return json(text);
}

std::string flag_name(const std::string& key) {
  std::string name = key;
  for (char& c : name)
    if (c == '_') c = '-';
  return "--" + name;
}

struct Invocation {
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

void add_config_flags(CLI::App* cmd, Invocation& inv) {
  cmd->add_option("--config", inv.config_path, "JSON configuration file (or a previous summary.json)");
  for (const auto& key : config_keys()) {
    std::string help = is_list_key(key) ? "comma-separated list, overrides config key " : "overrides config key ";
    cmd->add_option_function<std::string>(
        flag_name(key), [&inv, key](const std::string& v) { inv.overrides[key] = v; }, help + key);
  }
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open config file '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config", "'" + path + "' is not a JSON object");
  // A summary.json carries its experiment definition under "config".
  if (j.contains("config") && j.at("config").is_object()) return j.at("config");
  return j;
}

// Precedence: flags > OTSMC_OUTPUT_DIR (output only) > config file > defaults.
RunConfig resolve(const Invocation& inv) {
  json j = inv.config_path.empty() ? json::object() : load_json_file(inv.config_path);
  if (const char* env = std::getenv("OTSMC_OUTPUT_DIR"); env != nullptr && *env != '\0') j["output"] = env;
  for (const auto& [key, text] : inv.overrides) {
    if (is_list_key(key)) {
      json list = json::array();
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) list.push_back(scalar_from_text(item));
      }
      j[key] = list;
    } else {
      j[key] = scalar_from_text(text);
    }
  }
  return RunConfig::from_json(j);
}

unsigned effective_threads(const RunConfig& cfg) { return cfg.threads == 0 ? default_threads() : cfg.threads; }

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write '" + file.string() + "'");
  out << text;
}

json reference_provenance(const ReferenceMoments& ref) {
  json p;
  p["provenance"] = ref.provenance;
  if (ref.provenance != "analytic") {
    p["chain_length"] = ref.chain_length;
    p["burn_in"] = ref.burn_in;
    p["seed"] = ref.seed;
    p["acceptance_rate"] = ref.acceptance_rate;
    p["min_ess"] = ref.min_ess;
    if (!ref.warning.empty()) p["warning"] = ref.warning;
  }
  return p;
}

int cmd_run(const RunConfig& cfg) {
  const auto model = make_model(cfg);
  RunOptions opt = cfg.run_options();
  opt.threads = effective_threads(cfg);
  const RunReport report = run(*model, opt);

  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  {
    std::ofstream trace(dir / "trace.csv");
    write_trace_csv(trace, report);
  }
  {
    std::ofstream snap(dir / "ensemble.csv");
    write_ensemble_csv(snap, report.final_ensemble);
  }

  nlohmann::ordered_json summary;
  summary["version"] = OTSMC_VERSION;
  summary["seed"] = cfg.seed;
  summary["config"] = cfg.to_json();
  nlohmann::ordered_json metrics;
  metrics["temperatures"] = report.temperatures();
  metrics["forward_solves"] = report.forward_solves;
  metrics["failed_evaluations"] = report.failed_evaluations;
  metrics["final_ess"] = ess(report.final_ensemble);
  // Metrics against reference moments only when they are available cheaply;
  // `compare` runs the oracle when needed.
  if (model->exact_moments() || !cfg.moments.empty()) {
    const ReferenceMoments ref = reference_for(cfg, *model);
    metrics["rmse_mean"] = rmse_mean(report.final_ensemble, ref);
    metrics["variance_ratio"] = variance_ratio(report.final_ensemble, ref);
    metrics["reference"] = reference_provenance(ref);
  }
  summary["metrics"] = metrics;
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  std::cout << to_string(cfg.method) << ": K=" << report.temperatures() << " solves=" << report.forward_solves;
  if (metrics.contains("rmse_mean"))
    std::cout << " rmse_mean=" << metrics["rmse_mean"].get<double>() << " R=" << metrics["variance_ratio"].get<double>();
  std::cout << " -> " << dir.string() << "\n";
  return 0;
}

int cmd_compare(const RunConfig& cfg) {
  const auto model = make_model(cfg);
  const ReferenceMoments ref = reference_for(cfg, *model);
  const unsigned threads = effective_threads(cfg);
  std::vector<AggregateRow> rows;
  for (Method m : cfg.methods) {
    for (std::size_t p : cfg.p_list) {
      for (std::size_t n : cfg.n_list) {
        RunOptions opt = cfg.run_options();
        opt.method = m;
        opt.mutations = p;
        opt.particles = n;
        rows.push_back(repeat_runs(*model, ref, opt, cfg.n_runs, threads));
        const auto& r = rows.back();
        std::cout << r.method << " N=" << r.particles << " p=" << r.mutations << " rmse_mean=" << r.rmse_mean_avg
                  << " R=" << r.r_avg << " K=" << r.k_avg;
        if (r.failures > 0) std::cout << " failures=" << r.failures;
        std::cout << "\n";
      }
    }
  }
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "aggregate.csv");
    write_aggregate_csv(out, rows);
  }
  nlohmann::ordered_json summary;
  summary["version"] = OTSMC_VERSION;
  summary["seed"] = cfg.seed;
  summary["config"] = cfg.to_json();
  summary["reference"] = reference_provenance(ref);
  std::size_t failures = 0;
  for (const auto& r : rows) failures += r.failures;
  summary["failed_runs"] = failures;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return 0;
}

int cmd_oracle(const RunConfig& cfg) {
  const auto model = make_model(cfg);
  ReferenceMoments ref = mcmc_reference(*model, cfg.oracle);
  if (!ref.warning.empty()) std::cerr << "warning: " << ref.warning << "\n";
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  std::ofstream out(dir / "moments.json");
  write_moments_json(out, ref);
  std::cout << "oracle: acceptance=" << ref.acceptance_rate << " min_ess=" << ref.min_ess << " -> "
            << (dir / "moments.json").string() << "\n";
  return 0;
}

int cmd_fixture(const RunConfig& cfg) {
  const EllipticData data = EllipticInverse::make_synthetic_data(cfg.pde);
  write_fixture(cfg.output, cfg.pde, data);
  std::cout << "fixture -> " << cfg.output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential ensemble transform and adaptive SMC experiments"};
  app.set_version_flag("--version", std::string(OTSMC_VERSION));
  app.require_subcommand(1);

  Invocation run_inv, cmp_inv, orc_inv, fix_inv;
  CLI::App* run_cmd = app.add_subcommand("run", "single tempered run; writes trace.csv, summary.json, ensemble.csv");
  CLI::App* cmp_cmd = app.add_subcommand("compare", "repeated runs over methods x p x N; writes aggregate.csv");
  CLI::App* orc_cmd = app.add_subcommand("oracle", "pCN reference moments; writes moments.json");
  CLI::App* fix_cmd = app.add_subcommand("fixture", "synthetic elliptic data set; writes a fixture directory");
  add_config_flags(run_cmd, run_inv);
  add_config_flags(cmp_cmd, cmp_inv);
  add_config_flags(orc_cmd, orc_inv);
  add_config_flags(fix_cmd, fix_inv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(resolve(run_inv));
    if (cmp_cmd->parsed()) return cmd_compare(resolve(cmp_inv));
    if (orc_cmd->parsed()) return cmd_oracle(resolve(orc_inv));
    if (fix_cmd->parsed()) return cmd_fixture(resolve(fix_inv));
  } catch (const ConfigError& e) {
    std::cerr << "config error [" << e.key() << "]: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
