#include <doctest.h>

#include <cmath>
#include <iostream>
#include <random>
#include <sstream>

#include "models_for_tests.hpp"
#include "otsmc/errors.hpp"
#include "otsmc/mutation.hpp"

using namespace otsmc;
using testing_models::Flat;
using testing_models::Fragile;
using testing_models::IsotropicGaussian;

namespace {

Positions column(std::initializer_list<double> xs) {
  Positions p(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) p(i++, 0) = x;
  return p;
}

Positions random_positions(Rng& rng, Eigen::Index n, Eigen::Index d) {
  std::normal_distribution<double> g;
  Positions x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

Vector potentials_of(const TargetModel& m, const Positions& x) {
  Vector v(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) v(i) = m.log_potential(x.row(i).transpose());
  return v;
}

}  // namespace

TEST_CASE("refresh_statistics") {
  MutationState s = MutationState::initial(1);
  s.rho = 0.3;
  s.accepted = 4;
  s.proposed = 9;

  const MutationState flat = refresh_statistics(s, Ensemble(column({2.0, 2.0, 2.0})));
  CHECK(flat.variance(0) == MutationState::kVarianceFloor);
  CHECK(flat.rho == 0.3);
  CHECK(flat.accepted == 4);
  CHECK(flat.proposed == 9);

  const MutationState sym = refresh_statistics(s, Ensemble(column({-1.0, 1.0})));
  CHECK(sym.mean(0) == doctest::Approx(0.0));
  CHECK(sym.variance(0) == doctest::Approx(1.0));

  Vector lw(2);
  lw << std::log(0.25), std::log(0.75);
  const MutationState w = refresh_statistics(s, Ensemble(column({0.0, 4.0}), lw));
  CHECK(w.mean(0) == doctest::Approx(3.0));
  CHECK(w.variance(0) == doctest::Approx(3.0));
}

TEST_CASE("propose follows the autoregressive formula") {
  MutationState s = MutationState::initial(1);
  s.rho = 1.0;
  Rng rng = make_rng(1, Stream::kTest);
  Vector u(1);
  u << 1.7;
  CHECK(propose(s, u, rng) == u);

  s.rho = 0.6;
  for (int trial = 0; trial < 10; ++trial) {
    Rng a = make_rng(2, Stream::kTest, {static_cast<std::uint64_t>(trial)});
    Rng b = a;
    const double xi = std::normal_distribution<double>()(b);
    CHECK(propose(s, u, a)(0) == doctest::Approx(0.6 * u(0) + 0.8 * xi).epsilon(1e-14));
  }

  // rho -> 0: draws from N(m, diag Gamma) regardless of u.
  s.rho = 1e-9;
  s.mean = Vector::Constant(1, 3.0);
  s.variance = Vector::Constant(1, 4.0);
  double sum = 0.0, sq = 0.0;
  const int n = 40000;
  u(0) = -50.0;
  for (int k = 0; k < n; ++k) {
    const double x = propose(s, u, rng)(0);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean - 3.0) <= 4 * std::sqrt(4.0 / n));
  CHECK(std::abs(sq / n - mean * mean - 4.0) <= 4 * 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("rho = 1 leaves the ensemble unchanged and accepts everything") {
  Rng rng = make_rng(3, Stream::kTest);
  const IsotropicGaussian model(Vector::Ones(3), 0.5);
  const Positions x = random_positions(rng, 50, 3);
  MutationState s = refresh_statistics(MutationState::initial(3), Ensemble(x));
  s.rho = 1.0;
  const SweepResult r = mh_step(s, Ensemble(x), potentials_of(model, x), 0.7, model, {1, 0, 0, 1});
  CHECK(r.ensemble.positions() == x);
  CHECK(r.state.accepted == 50);
  CHECK(r.state.proposed == 50);
}

TEST_CASE("proposal matching the initial law at tau = 0 is always accepted") {
  Rng rng = make_rng(4, Stream::kTest);
  const IsotropicGaussian model(Vector::Ones(4), 0.5);
  const Positions x = random_positions(rng, 200, 4);
  MutationState s = MutationState::initial(4);  // m = 0, Gamma = I = mu0
  s.rho = 0.2;
  const SweepResult r = mh_step(s, Ensemble(x), potentials_of(model, x), 0.0, model, {5, 0, 0, 1});
  CHECK(r.state.accepted == 200);
}

TEST_CASE("long-run invariance of a one-dimensional Gaussian target") {
  // mu0 = N(0,1), V = -(u - 1)^2 / 2: target N(1/2, 1/2).
  Vector b(1);
  b << 1.0;
  const IsotropicGaussian model(b, 1.0);
  const auto exact = *model.exact_moments();
  MutationState s = MutationState::initial(1);
  s.mean(0) = -0.3;
  s.variance(0) = 0.8;
  s.rho = 0.5;

  // Independent chains run side by side, started from the target.
  const Eigen::Index chains = 100;
  const int steps = 1000;
  Rng rng = make_rng(6, Stream::kTest);
  Positions x(chains, 1);
  std::normal_distribution<double> g;
  for (Eigen::Index i = 0; i < chains; ++i) x(i, 0) = exact.mean(0) + std::sqrt(exact.diag_variance(0)) * g(rng);
  Ensemble e(x);
  Vector v = potentials_of(model, x);
  Vector sum = Vector::Zero(chains), sq = Vector::Zero(chains);
  for (int k = 0; k < steps; ++k) {
    SweepResult r = mh_step(s, e, v, 1.0, model, {7, 0, static_cast<std::uint64_t>(k), 1});
    e = std::move(r.ensemble);
    v = std::move(r.potentials);
    sum += e.positions().col(0);
    sq += e.positions().col(0).array().square().matrix();
  }
  // Chains are independent, so the spread of per-chain averages gives the
  // Monte Carlo standard error without modelling autocorrelation.
  const Vector m1 = sum / steps;
  const Vector m2 = sq / steps;
  const double mean1 = m1.mean();
  const double mean2 = m2.mean();
  const double se1 = std::sqrt((m1.array() - mean1).square().sum() / (chains - 1) / chains);
  const double se2 = std::sqrt((m2.array() - mean2).square().sum() / (chains - 1) / chains);
  const double second = exact.diag_variance(0) + exact.mean(0) * exact.mean(0);
  CHECK(std::abs(mean1 - exact.mean(0)) <= 3 * se1);
  CHECK(std::abs(mean2 - second) <= 3 * se2);
}

TEST_CASE("acceptance is unchanged by adding a constant to V") {
  Rng rng = make_rng(8, Stream::kTest);
  const IsotropicGaussian a(Vector::Ones(2), 0.3, 0.0);
  const IsotropicGaussian b(Vector::Ones(2), 0.3, 1234.5);
  const Positions x = random_positions(rng, 300, 2);
  const MutationState s = refresh_statistics(MutationState::initial(2), Ensemble(x));
  const SweepResult ra = mh_step(s, Ensemble(x), potentials_of(a, x), 0.8, a, {9, 1, 2, 1});
  const SweepResult rb = mh_step(s, Ensemble(x), potentials_of(b, x), 0.8, b, {9, 1, 2, 1});
  CHECK(ra.state.accepted == rb.state.accepted);
  CHECK(ra.ensemble.positions() == rb.ensemble.positions());
}

TEST_CASE("sweeps do not depend on the thread count") {
  Rng rng = make_rng(10, Stream::kTest);
  const IsotropicGaussian model(Vector::Ones(5), 0.4);
  const Positions x = random_positions(rng, 257, 5);
  const MutationState s = refresh_statistics(MutationState::initial(5), Ensemble(x));
  const Vector v = potentials_of(model, x);
  const SweepResult one = mh_step(s, Ensemble(x), v, 0.5, model, {11, 3, 1, 1});
  const SweepResult four = mh_step(s, Ensemble(x), v, 0.5, model, {11, 3, 1, 4});
  CHECK(one.ensemble.positions() == four.ensemble.positions());
  CHECK(one.potentials == four.potentials);
  CHECK(one.state.accepted == four.state.accepted);
}

TEST_CASE("cached potentials track accepted moves") {
  Rng rng = make_rng(12, Stream::kTest);
  const IsotropicGaussian model(Vector::Ones(3), 0.4);
  const Positions x = random_positions(rng, 100, 3);
  const MutationState s = refresh_statistics(MutationState::initial(3), Ensemble(x));
  const SweepResult r = mh_step(s, Ensemble(x), potentials_of(model, x), 0.5, model, {13, 0, 0, 1});
  CHECK(r.potentials == potentials_of(model, r.ensemble.positions()));
}

TEST_CASE("failed evaluations become rejections") {
  Rng rng = make_rng(14, Stream::kTest);
  const Fragile model(2, 0.5);
  Positions x = random_positions(rng, 100, 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, 0) = std::min(x(i, 0), 0.0);
  MutationState s = MutationState::initial(2);
  s.rho = 0.1;
  std::ostringstream sink;
  auto* old = std::clog.rdbuf(sink.rdbuf());
  const SweepResult r = mh_step(s, Ensemble(x), potentials_of(model, x), 1.0, model, {15, 0, 0, 1});
  std::clog.rdbuf(old);
  CHECK(r.state.failed > 0);
  CHECK(sink.str().find("treated as rejections") != std::string::npos);
  for (Eigen::Index i = 0; i < x.rows(); ++i) CHECK(r.ensemble.positions()(i, 0) <= 0.5);
}

TEST_CASE("adapt_rho") {
  MutationState s = MutationState::initial(1);
  s.rho = 0.8;
  s.accepted = 10;
  s.proposed = 100;
  CHECK(adapt_rho(s).rho == 1.0);
  s.accepted = 90;
  CHECK(adapt_rho(s).rho == 0.4);
  s.accepted = 50;
  const MutationState same = adapt_rho(s);
  CHECK(same.rho == 0.8);
  CHECK(same.accepted == 0);
  CHECK(same.proposed == 0);
  s.proposed = 0;
  s.accepted = 0;
  CHECK_THROWS_AS(adapt_rho(s), NoProposals);
}
