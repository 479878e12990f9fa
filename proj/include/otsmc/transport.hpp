#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "otsmc/ensemble.hpp"

namespace otsmc {

/// Dense squared-Euclidean cost between two copies of one particle cloud.
using CostMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

CostMatrix build_cost_matrix(const Positions& positions);

struct CouplingEntry {
  std::size_t row;
  std::size_t col;
  double mass;
};

/// Sparse optimal plan plus the dual certificate that proves optimality:
/// row_potential(i) + col_potential(j) <= cost(i, j) everywhere, with
/// equality on the support.
struct Coupling {
  std::vector<CouplingEntry> entries;  // sorted by (row, col)
  Vector row_marginals;
  Vector col_marginals;
  Vector row_potentials;
  Vector col_potentials;
  double objective = 0.0;       // sum C_ij c_ij
  double dual_objective = 0.0;  // sum alpha_i f_i + sum beta_j g_j
  std::size_t pivots = 0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(row_marginals.size()); }
  Eigen::MatrixXd dense() const;
};

struct CertificateReport {
  double max_row_error = 0.0;
  double max_col_error = 0.0;
  double max_dual_violation = 0.0;  // max(f_i + g_j - c_ij), should be <= tol
  double max_slackness = 0.0;       // max |f_i + g_j - c_ij| over the support
  double duality_gap = 0.0;
  std::size_t support = 0;
  bool ok = false;
};

/// Checks marginals (absolute 1e-9), support size <= 2N-1, dual feasibility
/// and complementary slackness. Dual tolerances scale with max(1, max cost)
/// because potentials carry the magnitude of the costs.
CertificateReport check_certificate(const CostMatrix& cost, const Coupling& coupling,
                                    double tol = 1e-9);

/// Exact discrete optimal transport between weightings alpha and beta of the
/// same support, by primal network simplex on the bipartite transportation
/// graph. The result is certified before it is returned.
/// Throws MarginalMismatch when the marginals are not probability vectors
/// of equal mass (1e-12).
Coupling solve_discrete_ot(const CostMatrix& cost, const Eigen::Ref<const Vector>& alpha,
                           const Eigen::Ref<const Vector>& beta);

/// Barycentric projection through the optimal plan from the ensemble's own
/// weights alpha to beta: u_i <- (1/alpha_i) sum_j C_ij u_j. Weights are kept.
Ensemble ensemble_transform(const Ensemble& e, const Eigen::Ref<const Vector>& beta);

/// Same, returning the plan alongside (for diagnostics and dumps).
Ensemble ensemble_transform(const Ensemble& e, const Eigen::Ref<const Vector>& beta,
                            Coupling* plan);

/// Reweight by exp(dtau dV) and transport back onto the input weights.
Ensemble apply_bayes_transform(const Ensemble& e, const Eigen::Ref<const Vector>& dV,
                               double dtau);

/// Sparse triplet dump `i,j,mass`.
void write_coupling_csv(std::ostream& out, const Coupling& coupling);

}  // namespace otsmc
