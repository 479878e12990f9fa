#pragma once

#include <cstddef>
#include <cstdint>

#include "otsmc/ensemble.hpp"
#include "otsmc/models.hpp"
#include "otsmc/rng.hpp"

namespace otsmc {

/// Adaptive autoregressive Metropolis-Hastings kernel state. Proposals are
///   u' = m + rho (u - m) + sqrt(1 - rho^2) xi,  xi ~ N(0, diag(variance)),
/// which is reversible with respect to phi = N(m, diag(variance)).
struct MutationState {
  static constexpr double kVarianceFloor = 1e-12;
  static constexpr double kInitialRho = 0.5;
  static constexpr double kLowAcceptance = 0.15;
  static constexpr double kHighAcceptance = 0.85;

  Vector mean;
  Vector variance;
  double rho = kInitialRho;
  std::size_t accepted = 0;
  std::size_t proposed = 0;
  std::size_t failed = 0;  ///< model evaluations that threw or were non-finite

  static MutationState initial(std::size_t dim);
  double acceptance_rate() const;
};

/// Replace mean/variance by the weighted moments of e (variance floored).
MutationState refresh_statistics(MutationState state, const Ensemble& e);

Vector propose(const MutationState& state, const Eigen::Ref<const Vector>& u, Rng& rng);

/// log phi(u) up to a constant.
double proposal_log_density(const MutationState& state, const Eigen::Ref<const Vector>& u);

/// Particles, the cached V(u_i) values, and the state after one sweep.
struct SweepResult {
  Ensemble ensemble;
  Vector potentials;
  MutationState state;
};

/// Options that make a sweep reproducible and optionally parallel.
struct SweepContext {
  std::uint64_t seed = 0;
  std::uint64_t temperature_index = 0;
  std::uint64_t sweep_index = 0;
  unsigned threads = 1;
};

/// One MH sweep over every particle at inverse temperature tau, targeting
/// mu0(u) exp(tau V(u)). potentials must hold V at the current positions.
/// Particle i draws from the stream keyed on (seed, temperature, sweep, i).
SweepResult mh_step(const MutationState& state, const Ensemble& e,
                    const Eigen::Ref<const Vector>& potentials, double tau,
                    const TargetModel& model, const SweepContext& ctx);

/// Scale adaptation from pooled counters; resets them.
/// rate < 0.15 -> rho = min(1, 2 rho); rate > 0.85 -> rho / 2.
/// Throws NoProposals when nothing was proposed.
MutationState adapt_rho(MutationState state);

}  // namespace otsmc
