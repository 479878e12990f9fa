#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "otsmc/ensemble.hpp"
#include "otsmc/models.hpp"
#include "otsmc/mutation.hpp"
#include "otsmc/resampling.hpp"

namespace otsmc {

enum class Method { kSet, kSmc };

Method parse_method(std::string_view name);
std::string_view to_string(Method method);

/// ESS_k(tau) for an equally weighted ensemble with cached potentials V.
double tempered_ess(const Eigen::Ref<const Vector>& V, double dtau);

/// Next inverse temperature: 1 when ESS_k(1) > xi, otherwise the
/// bisection estimate of inf{tau > tau_k : ESS_k(tau) <= xi}. The returned
/// tau always satisfies ESS_k(tau) <= xi in that case, within 1e-6 of xi
/// unless floating point cannot resolve the crossing further.
/// Throws InvalidPotential on non-finite V.
double next_temperature(double tau_k, const Eigen::Ref<const Vector>& V, double xi);

/// Particles with their cached potentials.
struct ParticleState {
  Ensemble ensemble;
  Vector potentials;
};

struct StepOptions {
  std::size_t mutations = 0;  ///< p, MH sweeps per temperature
  std::uint64_t seed = 0;
  std::uint64_t temperature_index = 0;
  unsigned threads = 1;
  ResamplingScheme scheme = ResamplingScheme::kStratified;
};

struct StepResult {
  ParticleState particles;
  MutationState state;
  std::size_t forward_solves = 0;
  std::size_t accepted = 0;
  std::size_t proposed = 0;
};

/// One SET level: optimal-transport Bayes transform, moment refresh, p MH
/// sweeps at tau_next, then scale adaptation.
StepResult set_step(const ParticleState& current, const MutationState& state, double tau_k,
                    double tau_next, const TargetModel& model, const StepOptions& opt);

/// One SMC level: same, with resampling in place of the transform.
StepResult smc_step(const ParticleState& current, const MutationState& state, double tau_k,
                    double tau_next, const TargetModel& model, const StepOptions& opt);

struct TemperatureRecord {
  std::size_t k = 0;
  double tau = 0.0;
  double ess = 1.0;  ///< ESS_k at the accepted tau
  double rho = 0.0;  ///< scale used by this level's sweeps
  double acceptance_rate = 0.0;
  std::size_t accepted = 0;
  std::size_t proposed = 0;
  std::size_t forward_solves = 0;  ///< cumulative
};

struct RunOptions {
  Method method = Method::kSet;
  std::size_t particles = 512;
  std::size_t mutations = 0;
  double xi = 0.5;
  std::uint64_t seed = 1;
  ResamplingScheme scheme = ResamplingScheme::kStratified;
  unsigned threads = 1;
  std::size_t max_temperatures = 10000;
};

struct RunReport {
  std::vector<TemperatureRecord> records;
  Ensemble final_ensemble;
  std::size_t forward_solves = 0;
  std::size_t failed_evaluations = 0;
  double wall_seconds = 0.0;  ///< informational; never serialized
  std::size_t temperatures() const { return records.size(); }
};

/// Adaptive tempered run from tau = 0 to 1. Deterministic given the seed,
/// independent of the thread count.
RunReport run(const TargetModel& model, const RunOptions& opt);

/// Evaluates V on every row. Failed or non-finite evaluations are stored as
/// -inf; returns how many failed.
std::size_t evaluate_potentials(const TargetModel& model, const Positions& positions,
                                Vector& out, unsigned threads);

}  // namespace otsmc
