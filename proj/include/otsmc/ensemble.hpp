#pragma once

#include <cstddef>
#include <iosfwd>

#include <Eigen/Core>

namespace otsmc {

/// One particle per row.
using Positions = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// log(sum(exp(values))), stable for values spanning hundreds of log-units.
/// Returns -inf when every entry is -inf.
double logsumexp(const Eigen::Ref<const Vector>& values);

/// Subtracts logsumexp so that exp(output) sums to one.
/// Throws WeightCollapse when no entry is finite.
Vector normalize_log_weights(const Eigen::Ref<const Vector>& raw);

/// Weighted particle approximation sum_i w_i delta(u_i) with normalized
/// log-weights. Treated as an immutable value.
class Ensemble {
 public:
  Ensemble() = default;

  /// Equally weighted ensemble.
  explicit Ensemble(Positions positions);

  /// Weighted ensemble; log_weights are normalized on construction.
  Ensemble(Positions positions, const Eigen::Ref<const Vector>& log_weights);

  std::size_t size() const noexcept { return static_cast<std::size_t>(positions_.rows()); }
  std::size_t dimension() const noexcept { return static_cast<std::size_t>(positions_.cols()); }

  const Positions& positions() const noexcept { return positions_; }
  const Vector& log_weights() const noexcept { return log_weights_; }
  Vector weights() const { return log_weights_.array().exp(); }

  bool equally_weighted(double tol = 1e-12) const;

  /// Same weights, new positions (same shape).
  Ensemble with_positions(Positions positions) const;

 private:
  Positions positions_;
  Vector log_weights_;
};

/// Bayes operator for the tempered increment exp(dtau * dV): new
/// log-weights are normalize(old + dtau * dV). Positions are untouched.
Ensemble reweight(const Ensemble& e, const Eigen::Ref<const Vector>& dV, double dtau);

/// Normalized effective sample size 1 / (N sum w_i^2), in [1/N, 1].
double ess(const Ensemble& e);
double ess_from_log_weights(const Eigen::Ref<const Vector>& log_weights);

Vector weighted_mean(const Ensemble& e);

/// Population convention: sum w_i u_id^2 - mean_d^2, clipped at zero.
Vector weighted_diag_variance(const Ensemble& e);

/// CSV snapshot with header `particle_id,w,x_0,...,x_{D-1}`.
void write_ensemble_csv(std::ostream& out, const Ensemble& e);
Ensemble read_ensemble_csv(std::istream& in);

}  // namespace otsmc
