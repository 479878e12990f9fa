#include "otsmc/mutation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>
#include <vector>

#include "otsmc/errors.hpp"
#include "otsmc/parallel.hpp"

namespace otsmc {

MutationState MutationState::initial(std::size_t dim) {
  MutationState s;
  s.mean = Vector::Zero(static_cast<Eigen::Index>(dim));
  s.variance = Vector::Ones(static_cast<Eigen::Index>(dim));
  return s;
}

double MutationState::acceptance_rate() const {
  return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
}

MutationState refresh_statistics(MutationState state, const Ensemble& e) {
  state.mean = weighted_mean(e);
  state.variance = weighted_diag_variance(e).cwiseMax(MutationState::kVarianceFloor);
  return state;
}

Vector propose(const MutationState& state, const Eigen::Ref<const Vector>& u, Rng& rng) {
  if (state.rho >= 1.0) return u;
  std::normal_distribution<double> normal;
  const double noise = std::sqrt(1.0 - state.rho * state.rho);
  Vector out(u.size());
  for (Eigen::Index d = 0; d < u.size(); ++d) {
    out(d) = state.mean(d) + state.rho * (u(d) - state.mean(d)) + noise * std::sqrt(state.variance(d)) * normal(rng);
  }
  return out;
}

double proposal_log_density(const MutationState& state, const Eigen::Ref<const Vector>& u) {
  return -0.5 * ((u - state.mean).array().square() / state.variance.array()).sum();
}

SweepResult mh_step(const MutationState& state, const Ensemble& e, const Eigen::Ref<const Vector>& potentials,
                    double tau, const TargetModel& model, const SweepContext& ctx) {
  const auto n = static_cast<Eigen::Index>(e.size());
  if (potentials.size() != n) throw std::invalid_argument("mh_step: potentials length does not match ensemble");
  if (!(tau >= 0 && tau <= 1)) throw std::invalid_argument("mh_step: tau must lie in [0, 1]");

  Positions next = e.positions();
  Vector next_v = potentials;
  std::vector<unsigned char> accepted(static_cast<std::size_t>(n), 0);
  std::vector<unsigned char> failed(static_cast<std::size_t>(n), 0);

  parallel_for(static_cast<std::size_t>(n), ctx.threads, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    if (state.rho >= 1.0) {
      accepted[i] = 1;  // identity proposal, ratio 1
      return;
    }
    Rng rng = make_rng(ctx.seed, Stream::kMutation, {ctx.temperature_index, ctx.sweep_index, i});
    const Vector u = e.positions().row(row).transpose();
    const Vector cand = propose(state, u, rng);
    double v_cand = 0.0;
    try {
      v_cand = model.log_potential(cand);
    } catch (const std::exception&) {
      failed[i] = 1;
      return;
    }
    if (!std::isfinite(v_cand)) {
      failed[i] = 1;
      return;
    }
    const double log_target_cand = model.log_initial_density(cand) + tau * v_cand;
    const double log_target_cur = model.log_initial_density(u) + tau * potentials(row);
    const double log_ratio = (log_target_cand - proposal_log_density(state, cand)) -
                             (log_target_cur - proposal_log_density(state, u));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (std::log(unif(rng)) < log_ratio) {
      next.row(row) = cand.transpose();
      next_v(row) = v_cand;
      accepted[i] = 1;
    }
  });

  SweepResult out{e.with_positions(std::move(next)), std::move(next_v), state};
  std::size_t fail_count = 0;
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    out.state.accepted += accepted[i];
    fail_count += failed[i];
  }
  out.state.proposed += static_cast<std::size_t>(n);
  out.state.failed += fail_count;
  if (fail_count > 0) {
    std::clog << "warning: " << fail_count << " model evaluation(s) failed in mutation sweep "
              << ctx.sweep_index << " at level " << ctx.temperature_index << "; treated as rejections\n";
  }
  return out;
}

MutationState adapt_rho(MutationState state) {
  if (state.proposed == 0) throw NoProposals("adapt_rho: no proposals since the last adaptation");
  const double rate = state.acceptance_rate();
  if (rate < MutationState::kLowAcceptance) {
    state.rho = std::min(1.0, 2.0 * state.rho);
  } else if (rate > MutationState::kHighAcceptance) {
    state.rho = state.rho / 2.0;
  }
  state.accepted = 0;
  state.proposed = 0;
  return state;
}

}  // namespace otsmc
