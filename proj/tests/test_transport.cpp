#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "otsmc/errors.hpp"
#include "otsmc/rng.hpp"
#include "otsmc/transport.hpp"

using namespace otsmc;

namespace {

Positions random_positions(Rng& rng, Eigen::Index n, Eigen::Index d) {
  std::normal_distribution<double> g;
  Positions x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

Vector random_simplex(Rng& rng, Eigen::Index n) {
  std::exponential_distribution<double> e;
  Vector v(n);
  for (auto& x : v) x = e(rng);
  return v / v.sum();
}

Vector uniform(Eigen::Index n) { return Vector::Constant(n, 1.0 / static_cast<double>(n)); }

void require_certificate(const CostMatrix& cost, const Coupling& plan) {
  const CertificateReport r = check_certificate(cost, plan);
  CHECK(r.max_row_error <= 1e-9);
  CHECK(r.max_col_error <= 1e-9);
  CHECK(r.support <= 2 * plan.size() - 1);
  CHECK(r.ok);
}

}  // namespace

TEST_CASE("build_cost_matrix") {
  CHECK(build_cost_matrix(Positions::Constant(1, 3, 2.0))(0, 0) == 0.0);

  Positions line(2, 1);
  line << 0.0, 3.0;
  const CostMatrix c = build_cost_matrix(line);
  CHECK(c(0, 0) == 0.0);
  CHECK(c(0, 1) == 9.0);
  CHECK(c(1, 0) == 9.0);

  Positions plane(2, 2);
  plane << 0.0, 0.0, 3.0, 4.0;
  CHECK(build_cost_matrix(plane)(0, 1) == 25.0);
}

TEST_CASE("identical marginals give the diagonal coupling") {
  Rng rng = make_rng(1, Stream::kTest);
  const Positions x = random_positions(rng, 12, 3);
  const Vector a = random_simplex(rng, 12);
  const CostMatrix cost = build_cost_matrix(x);
  const Coupling plan = solve_discrete_ot(cost, a, a);
  CHECK(plan.objective == doctest::Approx(0.0));
  const Eigen::MatrixXd dense = plan.dense();
  CHECK((dense.diagonal() - a).cwiseAbs().maxCoeff() <= 1e-15);
  require_certificate(cost, plan);
}

TEST_CASE("a point-mass target admits only one coupling") {
  CostMatrix cost(2, 2);
  cost << 0.0, 5.0, 5.0, 0.0;
  Vector a(2), b(2);
  a << 0.5, 0.5;
  b << 1.0, 0.0;
  const Coupling plan = solve_discrete_ot(cost, a, b);
  Eigen::MatrixXd expected(2, 2);
  expected << 0.5, 0.0, 0.5, 0.0;
  CHECK((plan.dense() - expected).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(plan.objective == doctest::Approx(2.5));
  require_certificate(cost, plan);
}

TEST_CASE("three points on a line against the vertex oracle") {
  Positions x(3, 1);
  x << 0.0, 1.0, 2.0;
  const CostMatrix cost = build_cost_matrix(x);
  const Vector a = uniform(3);
  Vector b(3);
  b << 0.5, 0.5, 0.0;
  const Coupling plan = solve_discrete_ot(cost, a, b);
  const auto ref = oracle::min_vertex_cost(cost, a, b);
  CHECK(plan.objective == doctest::Approx(ref.objective).epsilon(1e-12));
  require_certificate(cost, plan);

  // Here the optimum is unique: 0->0, 1 splits, 2->1.
  const Ensemble moved = ensemble_transform(Ensemble(x), b);
  const Positions& y = moved.positions();
  Vector bary(3);
  for (Eigen::Index i = 0; i < 3; ++i) bary(i) = ref.plan.row(i).dot(x.col(0)) / a(i);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(y(i, 0) == doctest::Approx(bary(i)));
}

TEST_CASE("marginal validation") {
  const CostMatrix cost = CostMatrix::Zero(3, 3);
  Vector a = uniform(3);
  Vector short_b = uniform(2);
  CHECK_THROWS_AS(solve_discrete_ot(cost, a, short_b), MarginalMismatch);
  Vector heavy = a * 1.1;
  CHECK_THROWS_AS(solve_discrete_ot(cost, a, heavy), MarginalMismatch);
  Vector negative(3);
  negative << 1.5, -0.5, 0.0;
  CHECK_THROWS_AS(solve_discrete_ot(cost, a, negative), MarginalMismatch);
  Vector nan_b = a;
  nan_b(1) = std::nan("");
  CHECK_THROWS_AS(solve_discrete_ot(cost, nan_b, a), MarginalMismatch);
}

TEST_CASE("uniform marginals match the best permutation") {
  Rng rng = make_rng(2, Stream::kTest);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 1 + trial % 5;
    const Positions x = random_positions(rng, n, 1 + trial % 3);
    const Positions y = random_positions(rng, n, x.cols());
    CostMatrix cost(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = (x.row(i) - y.row(j)).squaredNorm();
    const Coupling plan = solve_discrete_ot(cost, uniform(n), uniform(n));
    CHECK(std::abs(plan.objective - oracle::min_permutation_cost(cost)) <= 1e-10);
    require_certificate(cost, plan);
  }
}

TEST_CASE("random marginals match the vertex oracle") {
  Rng rng = make_rng(3, Stream::kTest);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 1 + trial % 4;
    const Positions x = random_positions(rng, n, 2);
    const CostMatrix cost = build_cost_matrix(x);
    const Vector a = random_simplex(rng, n);
    const Vector b = random_simplex(rng, n);
    const Coupling plan = solve_discrete_ot(cost, a, b);
    CHECK(std::abs(plan.objective - oracle::min_vertex_cost(cost, a, b).objective) <= 1e-9);
    require_certificate(cost, plan);
  }
}

TEST_CASE("certificates, support and bounds on larger random problems") {
  Rng rng = make_rng(4, Stream::kTest);
  std::uniform_int_distribution<int> zero(0, 4);
  for (int trial = 0; trial < 60; ++trial) {
    const Eigen::Index n = 5 + trial * 3;
    const Positions x = random_positions(rng, n, 1 + trial % 4);
    const CostMatrix cost = build_cost_matrix(x);
    Vector a = random_simplex(rng, n);
    Vector b = random_simplex(rng, n);
    // Exact zeros and ties exercise degenerate pivots.
    for (Eigen::Index i = 0; i < n; ++i)
      if (zero(rng) == 0) b(i) = 0.0;
    b /= b.sum();
    if (trial % 5 == 0) a = uniform(n);
    const Coupling plan = solve_discrete_ot(cost, a, b);
    require_certificate(cost, plan);
    CHECK(std::abs(plan.objective - plan.dual_objective) <= 1e-9 * std::max(1.0, cost.maxCoeff()));
    // The independent coupling is feasible, so never better.
    const double independent = a.transpose() * cost * b;
    CHECK(plan.objective <= independent + 1e-12);
    for (const auto& c : plan.entries) CHECK(c.mass > 0.0);
  }
}

TEST_CASE("degenerate ties: identical positions and uniform weights") {
  const Positions x = Positions::Zero(6, 2);
  const CostMatrix cost = build_cost_matrix(x);
  Rng rng = make_rng(5, Stream::kTest);
  const Coupling plan = solve_discrete_ot(cost, uniform(6), random_simplex(rng, 6));
  CHECK(plan.objective == 0.0);
  require_certificate(cost, plan);
}

TEST_CASE("ensemble_transform properties") {
  Rng rng = make_rng(6, Stream::kTest);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index n = 4 + 5 * trial;
    const Positions x = random_positions(rng, n, 3);
    const Ensemble e(x, random_simplex(rng, n).array().log().matrix());
    const Vector b = random_simplex(rng, n);
    const Ensemble out = ensemble_transform(e, b);
    CHECK(out.log_weights() == e.log_weights());

    // Column-marginal identity: sum_i alpha_i u_i^OT = sum_j beta_j u_j.
    const Vector lhs = out.positions().transpose() * e.weights();
    const Vector rhs = x.transpose() * b;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-9);

    // Convex hull containment per coordinate.
    for (Eigen::Index d = 0; d < x.cols(); ++d) {
      CHECK(out.positions().col(d).minCoeff() >= x.col(d).minCoeff() - 1e-12);
      CHECK(out.positions().col(d).maxCoeff() <= x.col(d).maxCoeff() + 1e-12);
    }
  }

  // beta = alpha keeps every particle in place.
  const Positions x = random_positions(rng, 20, 2);
  const Ensemble e(x);
  CHECK(ensemble_transform(e, e.weights()).positions() == x);
}

TEST_CASE("two particles collapse onto the survivor") {
  Positions x(2, 1);
  x << 0.0, 1.0;
  const Ensemble e(x);
  Vector b(2);
  b << 1.0, 0.0;
  const Ensemble out = ensemble_transform(e, b);
  CHECK(out.positions()(0, 0) == 0.0);
  CHECK(out.positions()(1, 0) == 0.0);

  Vector dv(2);
  dv << 0.0, -1e6;
  const Ensemble bayes = apply_bayes_transform(e, dv, 1.0);
  CHECK(bayes.positions()(0, 0) == 0.0);
  CHECK(bayes.positions()(1, 0) == 0.0);
  CHECK(bayes.equally_weighted());
}

TEST_CASE("apply_bayes_transform identities") {
  Rng rng = make_rng(7, Stream::kTest);
  const Positions x = random_positions(rng, 30, 2);
  const Ensemble e(x);
  Vector dv(30);
  for (auto& v : dv) v = std::normal_distribution<double>()(rng);
  CHECK(apply_bayes_transform(e, dv, 0.0).positions() == x);
  CHECK(apply_bayes_transform(e, Vector::Constant(30, 4.0), 0.7).positions() == x);
  const Ensemble moved = apply_bayes_transform(e, dv, 0.5);
  CHECK(moved.equally_weighted());
}

TEST_CASE("repeat solves are deterministic") {
  Rng rng = make_rng(8, Stream::kTest);
  const Positions x = random_positions(rng, 200, 4);
  const CostMatrix cost = build_cost_matrix(x);
  const Vector a = uniform(200);
  const Vector b = random_simplex(rng, 200);
  const Coupling p1 = solve_discrete_ot(cost, a, b);
  const Coupling p2 = solve_discrete_ot(cost, a, b);
  REQUIRE(p1.entries.size() == p2.entries.size());
  for (std::size_t k = 0; k < p1.entries.size(); ++k) {
    CHECK(p1.entries[k].row == p2.entries[k].row);
    CHECK(p1.entries[k].col == p2.entries[k].col);
    CHECK(p1.entries[k].mass == p2.entries[k].mass);
  }
}

TEST_CASE("coupling CSV dump") {
  CostMatrix cost(2, 2);
  cost << 0.0, 1.0, 1.0, 0.0;
  Vector a(2), b(2);
  a << 0.5, 0.5;
  b << 1.0, 0.0;
  std::ostringstream out;
  write_coupling_csv(out, solve_discrete_ot(cost, a, b));
  CHECK(out.str() == "i,j,mass\n0,0,0.5\n1,0,0.5\n");
}
