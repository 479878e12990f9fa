#include "otsmc/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "otsmc/errors.hpp"

namespace otsmc {

namespace fs = std::filesystem;

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "model", "dim", "sigma", "length_scale", "grid", "biot", "delta", "gamma", "s", "noise_ratio",
      "amplitude", "obs_per_side", "data_seed", "fixture", "method", "methods", "n", "n_list", "p", "p_list",
      "xi", "scheme", "seed", "n_runs", "moments", "oracle_length", "oracle_burn_in", "oracle_seed",
      "output", "threads"};
  return keys;
}

namespace {

double get_real(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError(key, key + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(key, key + " must be finite");
  return v;
}

std::uint64_t get_count(const nlohmann::json& j, const std::string& key) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    if (j.get<std::int64_t>() < 0) throw ConfigError(key, key + " must be non-negative");
    return static_cast<std::uint64_t>(j.get<std::int64_t>());
  }
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (v >= 0 && v == std::floor(v) && v < 9.007199254740992e15) return static_cast<std::uint64_t>(v);
  }
  throw ConfigError(key, key + " must be a non-negative integer");
}

std::string get_string(const nlohmann::json& j, const std::string& key) {
  if (!j.is_string()) throw ConfigError(key, key + " must be a string");
  return j.get<std::string>();
}

std::vector<std::size_t> get_counts(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.empty()) throw ConfigError(key, key + " must be a non-empty list of integers");
  std::vector<std::size_t> out;
  for (const auto& v : j) out.push_back(static_cast<std::size_t>(get_count(v, key)));
  return out;
}

Method get_method(const nlohmann::json& j, const std::string& key) {
  const std::string name = get_string(j, key);
  if (name != "set" && name != "smc") throw ConfigError(key, key + " must be 'set' or 'smc'");
  return parse_method(name);
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
  const auto& keys = config_keys();
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError(key, "unknown configuration key '" + key + "'");
  }
  RunConfig c;
  const auto has = [&](const char* key) { return j.contains(key) && !j.at(key).is_null(); };

  if (has("model")) c.model = get_string(j.at("model"), "model");
  if (c.model != "gaussian" && c.model != "pde") throw ConfigError("model", "model must be 'gaussian' or 'pde'");
  if (has("dim")) c.dim = get_count(j.at("dim"), "dim");
  if (has("sigma")) c.sigma = get_real(j.at("sigma"), "sigma");
  if (has("length_scale")) c.length_scale = get_real(j.at("length_scale"), "length_scale");
  if (has("grid")) c.pde.grid = get_count(j.at("grid"), "grid");
  if (has("biot")) c.pde.biot = get_real(j.at("biot"), "biot");
  if (has("delta")) c.pde.delta = get_real(j.at("delta"), "delta");
  if (has("gamma")) c.pde.gamma = get_real(j.at("gamma"), "gamma");
  if (has("s")) c.pde.s = get_real(j.at("s"), "s");
  if (has("noise_ratio")) c.pde.noise_ratio = get_real(j.at("noise_ratio"), "noise_ratio");
  if (has("amplitude")) c.pde.truth_amplitude = get_real(j.at("amplitude"), "amplitude");
  if (has("obs_per_side")) c.pde.obs_per_side = get_count(j.at("obs_per_side"), "obs_per_side");
  if (has("data_seed")) c.pde.data_seed = get_count(j.at("data_seed"), "data_seed");
  if (has("fixture")) c.fixture = get_string(j.at("fixture"), "fixture");
  if (has("method")) c.method = get_method(j.at("method"), "method");
  if (has("methods")) {
    const auto& m = j.at("methods");
    if (!m.is_array() || m.empty()) throw ConfigError("methods", "methods must be a non-empty list");
    c.methods.clear();
    for (const auto& v : m) c.methods.push_back(get_method(v, "methods"));
  }
  if (has("n")) c.n = get_count(j.at("n"), "n");
  if (has("n_list")) c.n_list = get_counts(j.at("n_list"), "n_list");
  if (has("p")) c.p = get_count(j.at("p"), "p");
  if (has("p_list")) c.p_list = get_counts(j.at("p_list"), "p_list");
  if (has("xi")) c.xi = get_real(j.at("xi"), "xi");
  if (has("scheme")) {
    const std::string s = get_string(j.at("scheme"), "scheme");
    if (s != "multinomial" && s != "stratified" && s != "systematic")
      throw ConfigError("scheme", "scheme must be multinomial, stratified or systematic");
    c.scheme = parse_resampling_scheme(s);
  }
  if (has("seed")) c.seed = get_count(j.at("seed"), "seed");
  if (has("n_runs")) c.n_runs = get_count(j.at("n_runs"), "n_runs");
  if (has("moments")) c.moments = get_string(j.at("moments"), "moments");
  if (has("oracle_length")) c.oracle.length = get_count(j.at("oracle_length"), "oracle_length");
  if (has("oracle_burn_in")) c.oracle.burn_in = get_count(j.at("oracle_burn_in"), "oracle_burn_in");
  if (has("oracle_seed")) c.oracle.seed = get_count(j.at("oracle_seed"), "oracle_seed");
  if (has("output")) c.output = get_string(j.at("output"), "output");
  if (has("threads")) c.threads = static_cast<unsigned>(get_count(j.at("threads"), "threads"));

  if (!(c.xi > 0 && c.xi < 1)) throw ConfigError("xi", "xi must lie in (0,1)");
  if (c.n < 2) throw ConfigError("n", "n must be at least 2");
  for (auto v : c.n_list)
    if (v < 2) throw ConfigError("n_list", "n_list entries must be at least 2");
  if (c.n_runs < 1) throw ConfigError("n_runs", "n_runs must be at least 1");
  if (c.dim < 1) throw ConfigError("dim", "dim must be at least 1");
  if (!(c.sigma > 0)) throw ConfigError("sigma", "sigma must be > 0");
  if (!(c.length_scale > 0)) throw ConfigError("length_scale", "length_scale must be > 0");
  if (c.pde.grid < 3) throw ConfigError("grid", "grid must be at least 3");
  if (!(c.pde.biot > 0)) throw ConfigError("biot", "biot must be > 0");
  if (!(c.pde.delta > 0)) throw ConfigError("delta", "delta must be > 0");
  if (!(c.pde.gamma > 0)) throw ConfigError("gamma", "gamma must be > 0");
  if (!(c.pde.s > 1)) throw ConfigError("s", "s must be > 1");
  if (!(c.pde.noise_ratio > 0)) throw ConfigError("noise_ratio", "noise_ratio must be > 0");
  if (c.pde.obs_per_side < 1) throw ConfigError("obs_per_side", "obs_per_side must be at least 1");
  if (c.oracle.length < 10000) throw ConfigError("oracle_length", "oracle_length must be at least 10000");
  if (c.oracle.burn_in >= c.oracle.length)
    throw ConfigError("oracle_burn_in", "oracle_burn_in must be shorter than oracle_length");
  if (c.output.empty()) throw ConfigError("output", "output must not be empty");
  return c;
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  if (model == "gaussian") {
    j["dim"] = dim;
    j["sigma"] = sigma;
    j["length_scale"] = length_scale;
  } else {
    j["grid"] = pde.grid;
    j["biot"] = pde.biot;
    j["delta"] = pde.delta;
    j["gamma"] = pde.gamma;
    j["s"] = pde.s;
    j["noise_ratio"] = pde.noise_ratio;
    j["amplitude"] = pde.truth_amplitude;
    j["obs_per_side"] = pde.obs_per_side;
    j["data_seed"] = pde.data_seed;
    j["fixture"] = fixture;
    j["moments"] = moments;
    j["oracle_length"] = oracle.length;
    j["oracle_burn_in"] = oracle.burn_in;
    j["oracle_seed"] = oracle.seed;
  }
  j["method"] = std::string(to_string(method));
  std::vector<std::string> names;
  for (auto m : methods) names.emplace_back(to_string(m));
  j["methods"] = names;
  j["n"] = n;
  j["n_list"] = n_list;
  j["p"] = p;
  j["p_list"] = p_list;
  j["xi"] = xi;
  j["scheme"] = std::string(to_string(scheme));
  j["seed"] = seed;
  j["n_runs"] = n_runs;
  return j;
}

RunOptions RunConfig::run_options() const {
  RunOptions o;
  o.method = method;
  o.particles = n;
  o.mutations = p;
  o.xi = xi;
  o.seed = seed;
  o.scheme = scheme;
  o.threads = threads;
  return o;
}

std::unique_ptr<TargetModel> make_model(const RunConfig& cfg) {
  if (cfg.model == "gaussian") return std::make_unique<GaussianToy>(cfg.dim, cfg.sigma, cfg.length_scale);
  if (!cfg.fixture.empty()) {
    auto [pde, data] = read_fixture(cfg.fixture);
    return std::make_unique<EllipticInverse>(pde, std::move(data));
  }
  return std::make_unique<EllipticInverse>(cfg.pde);
}

ReferenceMoments reference_for(const RunConfig& cfg, const TargetModel& model) {
  if (model.exact_moments()) return analytic_reference(model);
  if (!cfg.moments.empty()) {
    std::ifstream in(cfg.moments);
    if (!in) throw ConfigError("moments", "cannot open moments file '" + cfg.moments + "'");
    ReferenceMoments ref = read_moments_json(in);
    if (static_cast<std::size_t>(ref.mean.size()) != model.dimension())
      throw ConfigError("moments", "moments file dimension does not match the model");
    return ref;
  }
  return mcmc_reference(model, cfg.oracle);
}

void write_fixture(const fs::path& dir, const EllipticConfig& cfg, const EllipticData& data) {
  fs::create_directories(dir);
  nlohmann::ordered_json m;
  m["format"] = "otsmc-elliptic-fixture-1";
  m["data_seed"] = cfg.data_seed;
  m["grid"] = cfg.grid;
  m["biot"] = cfg.biot;
  m["delta"] = cfg.delta;
  m["gamma"] = cfg.gamma;
  m["s"] = cfg.s;
  m["noise_ratio"] = cfg.noise_ratio;
  m["amplitude"] = cfg.truth_amplitude;
  m["obs_per_side"] = cfg.obs_per_side;
  m["noise_std"] = data.noise_std;
  m["gamma_r"] = "bottom";
  m["prior_mean"] = 0.0;
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';

  std::ofstream obs(dir / "observations.csv");
  obs.precision(std::numeric_limits<double>::max_digits10);
  obs << "j,x,y,d\n";
  for (std::size_t j = 0; j < data.points.size(); ++j)
    obs << j << ',' << data.points[j][0] << ',' << data.points[j][1] << ',' << data.data(static_cast<Eigen::Index>(j)) << '\n';

  std::ofstream truth(dir / "truth.csv");
  truth.precision(std::numeric_limits<double>::max_digits10);
  truth << "node,x,y,u\n";
  const double h = 1.0 / static_cast<double>(cfg.grid - 1);
  for (std::size_t iy = 0; iy < cfg.grid; ++iy)
    for (std::size_t ix = 0; ix < cfg.grid; ++ix) {
      const std::size_t node = iy * cfg.grid + ix;
      truth << node << ',' << ix * h << ',' << iy * h << ',' << data.truth(static_cast<Eigen::Index>(node)) << '\n';
    }
}

namespace {

std::vector<std::vector<double>> read_csv_rows(const fs::path& file, std::size_t columns) {
  std::ifstream in(file);
  if (!in) throw ConfigError("fixture", "cannot open fixture file '" + file.string() + "'");
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != columns) throw ConfigError("fixture", "malformed row in '" + file.string() + "'");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::pair<EllipticConfig, EllipticData> read_fixture(const fs::path& dir) {
  std::ifstream min(dir / "manifest.json");
  if (!min) throw ConfigError("fixture", "no manifest.json in '" + dir.string() + "'");
  const auto m = nlohmann::json::parse(min);
  EllipticConfig cfg;
  cfg.data_seed = m.at("data_seed").get<std::uint64_t>();
  cfg.grid = m.at("grid").get<std::size_t>();
  cfg.biot = m.at("biot").get<double>();
  cfg.delta = m.at("delta").get<double>();
  cfg.gamma = m.at("gamma").get<double>();
  cfg.s = m.at("s").get<double>();
  cfg.noise_ratio = m.at("noise_ratio").get<double>();
  cfg.truth_amplitude = m.at("amplitude").get<double>();
  cfg.obs_per_side = m.at("obs_per_side").get<std::size_t>();

  EllipticData data;
  data.noise_std = m.at("noise_std").get<double>();
  const auto obs = read_csv_rows(dir / "observations.csv", 4);
  data.data.resize(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t j = 0; j < obs.size(); ++j) {
    data.points.push_back({obs[j][1], obs[j][2]});
    data.data(static_cast<Eigen::Index>(j)) = obs[j][3];
  }
  const auto truth = read_csv_rows(dir / "truth.csv", 4);
  if (truth.size() != cfg.grid * cfg.grid) throw ConfigError("fixture", "truth.csv does not match the grid size");
  data.truth.resize(static_cast<Eigen::Index>(truth.size()));
  for (std::size_t k = 0; k < truth.size(); ++k) data.truth(static_cast<Eigen::Index>(k)) = truth[k][3];
  return {cfg, std::move(data)};
}

}  // namespace otsmc
