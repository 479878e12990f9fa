#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "otsmc/diagnostics.hpp"
#include "otsmc/models.hpp"
#include "otsmc/tempering.hpp"

namespace otsmc {

/// Experiment configuration. Read from a flat JSON object; unknown keys and
/// out-of-range values raise ConfigError naming the key.
struct RunConfig {
  std::string model = "gaussian";  // gaussian | pde

  // gaussian toy
  std::size_t dim = 20;
  double sigma = 2.0;
  double length_scale = 4.0;

  // elliptic inverse problem
  EllipticConfig pde;
  std::string fixture;  ///< directory written by `otsmc fixture`; overrides pde

  Method method = Method::kSet;
  std::vector<Method> methods = {Method::kSet, Method::kSmc};
  std::size_t n = 512;
  std::vector<std::size_t> n_list = {250, 500, 1000, 2000};
  std::size_t p = 0;
  std::vector<std::size_t> p_list = {0, 1};
  double xi = 0.5;
  ResamplingScheme scheme = ResamplingScheme::kStratified;
  std::uint64_t seed = 1;
  std::size_t n_runs = 1;

  std::string moments;  ///< reference moments JSON; computed when empty
  OracleOptions oracle;

  // Execution settings: not part of the echoed experiment definition.
  std::string output = "otsmc_out";
  unsigned threads = 0;

  static RunConfig from_json(const nlohmann::json& j);
  /// Experiment echo (excludes output and threads, which never change results).
  nlohmann::ordered_json to_json() const;
  RunOptions run_options() const;
};

/// Keys accepted by RunConfig::from_json.
const std::vector<std::string>& config_keys();

std::unique_ptr<TargetModel> make_model(const RunConfig& cfg);

/// Analytic moments when the model has them, else the moments file, else a
/// fresh pCN oracle run with cfg.oracle settings.
ReferenceMoments reference_for(const RunConfig& cfg, const TargetModel& model);

/// Fixture directory: manifest.json, observations.csv (j,x,y,d) and
/// truth.csv (node,x,y,u).
void write_fixture(const std::filesystem::path& dir, const EllipticConfig& cfg, const EllipticData& data);
std::pair<EllipticConfig, EllipticData> read_fixture(const std::filesystem::path& dir);

}  // namespace otsmc
