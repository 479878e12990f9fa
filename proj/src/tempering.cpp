#include "otsmc/tempering.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "otsmc/errors.hpp"
#include "otsmc/parallel.hpp"
#include "otsmc/transport.hpp"

namespace otsmc {

Method parse_method(std::string_view name) {
  if (name == "set") return Method::kSet;
  if (name == "smc") return Method::kSmc;
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(Method method) { return method == Method::kSet ? "set" : "smc"; }

double tempered_ess(const Eigen::Ref<const Vector>& V, double dtau) {
  return ess_from_log_weights(dtau * V);
}

double next_temperature(double tau_k, const Eigen::Ref<const Vector>& V, double xi) {
  if (!(tau_k >= 0 && tau_k < 1)) throw std::invalid_argument("next_temperature: tau_k must lie in [0, 1)");
  if (!(xi > 0 && xi < 1)) throw std::invalid_argument("next_temperature: xi must lie in (0, 1)");
  if (V.size() == 0) throw InvalidPotential("next_temperature: empty potential vector");
  if (!V.allFinite()) throw InvalidPotential("next_temperature: non-finite potential value");

  const double span = 1.0 - tau_k;
  if (tempered_ess(V, span) > xi) return 1.0;

  // ESS is non-increasing in dtau; keep ESS(lo) > xi >= ESS(hi).
  double lo = 0.0;
  double hi = span;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (tempered_ess(V, mid) <= xi) {
      hi = mid;
    } else {
      lo = mid;
    }
    if (hi - lo <= 1e-10 && xi - tempered_ess(V, hi) <= 1e-9) break;
  }
  const double next = std::min(1.0, tau_k + hi);
  return next > tau_k ? next : std::nextafter(tau_k, 2.0);
}

std::size_t evaluate_potentials(const TargetModel& model, const Positions& positions, Vector& out,
                                unsigned threads) {
  const auto n = static_cast<std::size_t>(positions.rows());
  out.resize(positions.rows());
  std::vector<unsigned char> failed(n, 0);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    double v = -std::numeric_limits<double>::infinity();
    try {
      v = model.log_potential(positions.row(row).transpose());
    } catch (const std::exception&) {
    }
    if (!std::isfinite(v)) {
      failed[i] = 1;
      v = -std::numeric_limits<double>::infinity();
    }
    out(row) = v;
  });
  std::size_t count = 0;
  for (auto f : failed) count += f;
  return count;
}

namespace {

void require_evaluations(std::size_t failures, const char* where) {
  if (failures > 0) {
    std::ostringstream msg;
    msg << where << ": " << failures << " forward evaluation(s) failed";
    throw SolverFailure(msg.str());
  }
}

StepResult mutate(ParticleState particles, MutationState state, double tau_next, const TargetModel& model,
                  const StepOptions& opt, std::size_t solves) {
  state = refresh_statistics(std::move(state), particles.ensemble);
  StepResult out;
  for (std::size_t s = 0; s < opt.mutations; ++s) {
    const SweepContext ctx{opt.seed, opt.temperature_index, s, opt.threads};
    SweepResult sweep = mh_step(state, particles.ensemble, particles.potentials, tau_next, model, ctx);
    if (state.rho < 1.0) solves += particles.ensemble.size();
    particles.ensemble = std::move(sweep.ensemble);
    particles.potentials = std::move(sweep.potentials);
    state = std::move(sweep.state);
  }
  out.accepted = state.accepted;
  out.proposed = state.proposed;
  if (opt.mutations > 0) state = adapt_rho(std::move(state));
  out.particles = std::move(particles);
  out.state = std::move(state);
  out.forward_solves = solves;
  return out;
}

}  // namespace

StepResult set_step(const ParticleState& current, const MutationState& state, double tau_k, double tau_next,
                    const TargetModel& model, const StepOptions& opt) {
  const double dtau = tau_next - tau_k;
  if (!current.ensemble.equally_weighted(1e-9)) throw std::invalid_argument("set_step: ensemble must be equally weighted");
  ParticleState moved{current.ensemble, current.potentials};
  std::size_t solves = 0;
  if (dtau > 0) {
    moved.ensemble = apply_bayes_transform(current.ensemble, current.potentials, dtau);
    // Cached values stay valid when the transform moved nothing.
    if (moved.ensemble.positions() != current.ensemble.positions()) {
      require_evaluations(evaluate_potentials(model, moved.ensemble.positions(), moved.potentials, opt.threads),
                          "set_step");
      solves += moved.ensemble.size();
    }
  }
  return mutate(std::move(moved), state, tau_next, model, opt, solves);
}

StepResult smc_step(const ParticleState& current, const MutationState& state, double tau_k, double tau_next,
                    const TargetModel& model, const StepOptions& opt) {
  const double dtau = tau_next - tau_k;
  if (!current.ensemble.equally_weighted(1e-9)) throw std::invalid_argument("smc_step: ensemble must be equally weighted");
  const Ensemble weighted = reweight(current.ensemble, current.potentials, dtau);
  Rng rng = make_rng(opt.seed, Stream::kResampling, {opt.temperature_index});
  const ResampleIndices idx = resample(opt.scheme, weighted.weights(), rng);
  ParticleState resampled{gather(weighted, idx), Vector(current.potentials.size())};
  for (std::size_t k = 0; k < idx.size(); ++k) resampled.potentials(k) = current.potentials(idx[k]);
  return mutate(std::move(resampled), state, tau_next, model, opt, 0);
}

RunReport run(const TargetModel& model, const RunOptions& opt) {
  if (opt.particles < 2) throw std::invalid_argument("run: need at least 2 particles");
  if (!(opt.xi > 0 && opt.xi < 1)) throw std::invalid_argument("xi must lie in (0,1)");
  const auto start = std::chrono::steady_clock::now();
  const auto n = static_cast<Eigen::Index>(opt.particles);
  const auto dim = static_cast<Eigen::Index>(model.dimension());

  Positions init(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng = make_rng(opt.seed, Stream::kInitial, {static_cast<std::uint64_t>(i)});
    init.row(i) = model.sample_initial(rng).transpose();
  }
  ParticleState particles{Ensemble(std::move(init)), Vector()};
  require_evaluations(evaluate_potentials(model, particles.ensemble.positions(), particles.potentials, opt.threads),
                      "run: initial ensemble");

  RunReport report;
  report.forward_solves = opt.particles;
  MutationState state = MutationState::initial(model.dimension());
  double tau = 0.0;
  std::size_t k = 0;
  try {
    while (tau < 1.0) {
      if (k >= opt.max_temperatures) throw std::runtime_error("run: temperature ladder exceeded max_temperatures");
      const double next = next_temperature(tau, particles.potentials, opt.xi);
      TemperatureRecord rec;
      rec.k = k + 1;
      rec.tau = next;
      rec.ess = tempered_ess(particles.potentials, next - tau);
      rec.rho = state.rho;
      const StepOptions step{opt.mutations, opt.seed, k, opt.threads, opt.scheme};
      StepResult res = opt.method == Method::kSet ? set_step(particles, state, tau, next, model, step)
                                                  : smc_step(particles, state, tau, next, model, step);
      rec.accepted = res.accepted;
      rec.proposed = res.proposed;
      rec.acceptance_rate =
          res.proposed == 0 ? 0.0 : static_cast<double>(res.accepted) / static_cast<double>(res.proposed);
      report.forward_solves += res.forward_solves;
      rec.forward_solves = report.forward_solves;
      report.records.push_back(rec);
      particles = std::move(res.particles);
      state = std::move(res.state);
      tau = next;
      ++k;
    }
  } catch (const WeightCollapse& err) {
    std::ostringstream msg;
    msg << err.what() << " (method " << to_string(opt.method) << ", level " << k + 1 << ", tau " << tau << ", "
        << report.forward_solves << " forward solves)";
    throw WeightCollapse(msg.str());
  }
  report.final_ensemble = std::move(particles.ensemble);
  report.failed_evaluations = state.failed;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace otsmc
