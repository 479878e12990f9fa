#include "otsmc/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "otsmc/errors.hpp"

namespace otsmc {

double logsumexp(const Eigen::Ref<const Vector>& values) {
  if (values.size() == 0) return -std::numeric_limits<double>::infinity();
  const double max = values.maxCoeff();
  if (!std::isfinite(max)) return max;  // all -inf, or a +inf present
  return max + std::log((values.array() - max).exp().sum());
}

Vector normalize_log_weights(const Eigen::Ref<const Vector>& raw) {
  if (raw.size() == 0) throw std::invalid_argument("normalize_log_weights: empty input");
  if (raw.array().isNaN().any()) throw WeightCollapse("normalize_log_weights: NaN log-weight");
  const double lse = logsumexp(raw);
  if (!std::isfinite(lse)) {
    throw WeightCollapse(lse < 0 ? "normalize_log_weights: all weights are zero"
                                 : "normalize_log_weights: infinite log-weight");
  }
  // Shift by the maximum first so the dominant weights carry no rounding
  // from large raw magnitudes.
  const Vector shifted = raw.array() - raw.maxCoeff();
  return shifted.array() - logsumexp(shifted);
}

Ensemble::Ensemble(Positions positions)
    : Ensemble(std::move(positions), Vector::Zero(0)) {}

Ensemble::Ensemble(Positions positions, const Eigen::Ref<const Vector>& log_weights)
    : positions_(std::move(positions)) {
  const auto n = positions_.rows();
  if (n < 1 || positions_.cols() < 1)
    throw std::invalid_argument("Ensemble: need at least one particle and one dimension");
  if (!positions_.allFinite()) throw std::invalid_argument("Ensemble: non-finite position");
  if (log_weights.size() == 0) {
    log_weights_ = Vector::Constant(n, -std::log(static_cast<double>(n)));
    return;
  }
  if (log_weights.size() != n)
    throw std::invalid_argument("Ensemble: log_weights length does not match particle count");
  log_weights_ = normalize_log_weights(log_weights);
  if (!log_weights_.allFinite())
    throw std::invalid_argument("Ensemble: zero-weight particle (log-weight is -inf)");
}

Ensemble Ensemble::with_positions(Positions positions) const {
  if (positions.rows() != positions_.rows() || positions.cols() != positions_.cols())
    throw std::invalid_argument("Ensemble::with_positions: shape mismatch");
  if (!positions.allFinite()) throw std::invalid_argument("Ensemble: non-finite position");
  Ensemble out;
  out.positions_ = std::move(positions);
  out.log_weights_ = log_weights_;
  return out;
}

bool Ensemble::equally_weighted(double tol) const {
  const double target = -std::log(static_cast<double>(size()));
  return ((log_weights_.array() - target).abs() <= tol).all();
}

Ensemble reweight(const Ensemble& e, const Eigen::Ref<const Vector>& dV, double dtau) {
  if (static_cast<std::size_t>(dV.size()) != e.size())
    throw std::invalid_argument("reweight: potential length does not match ensemble");
  if (!std::isfinite(dtau) || dtau < 0) throw std::invalid_argument("reweight: dtau must be finite and >= 0");
  if (dtau == 0) return e;
  return Ensemble(e.positions(), e.log_weights() + dtau * dV);
}

double ess_from_log_weights(const Eigen::Ref<const Vector>& log_weights) {
  // (sum w)^2 / (N sum w^2) with w scaled so the largest is 1; exact for
  // equal weights and free of overflow.
  const double top = log_weights.maxCoeff();
  if (!std::isfinite(top)) throw WeightCollapse("ess: no finite log-weight");
  const Eigen::ArrayXd w = (log_weights.array() - top).exp();
  const double sum = w.sum();
  return std::min(1.0, sum * sum / (static_cast<double>(log_weights.size()) * w.square().sum()));
}

double ess(const Ensemble& e) { return ess_from_log_weights(e.log_weights()); }

Vector weighted_mean(const Ensemble& e) {
  return e.positions().transpose() * e.weights();
}

Vector weighted_diag_variance(const Ensemble& e) {
  const Vector w = e.weights();
  const Vector mean = e.positions().transpose() * w;
  Vector var(e.dimension());
  for (Eigen::Index d = 0; d < var.size(); ++d) {
    const auto centered = e.positions().col(d).array() - mean(d);
    var(d) = (w.array() * centered.square()).sum();
  }
  return var;
}

void write_ensemble_csv(std::ostream& out, const Ensemble& e) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << "particle_id,w";
  for (std::size_t d = 0; d < e.dimension(); ++d) out << ",x_" << d;
  out << '\n';
  const Vector w = e.weights();
  for (std::size_t i = 0; i < e.size(); ++i) {
    out << i << ',' << w(i);
    for (std::size_t d = 0; d < e.dimension(); ++d) out << ',' << e.positions()(i, d);
    out << '\n';
  }
  out.precision(old_precision);
}

Ensemble read_ensemble_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_ensemble_csv: empty input");
  const auto columns = std::count(line.begin(), line.end(), ',') + 1;
  if (columns < 3 || line.rfind("particle_id,w", 0) != 0)
    throw std::runtime_error("read_ensemble_csv: unexpected header '" + line + "'");
  const auto dim = columns - 2;
  std::vector<double> values;
  std::vector<double> weights;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(row, cell, ',')) cells.push_back(std::stod(cell));
    if (static_cast<long>(cells.size()) != columns)
      throw std::runtime_error("read_ensemble_csv: ragged row '" + line + "'");
    weights.push_back(cells[1]);
    values.insert(values.end(), cells.begin() + 2, cells.end());
  }
  const auto n = static_cast<Eigen::Index>(weights.size());
  Positions positions = Eigen::Map<Positions>(values.data(), n, dim);
  Vector log_w = Eigen::Map<Vector>(weights.data(), n).array().log();
  return Ensemble(std::move(positions), log_w);
}

}  // namespace otsmc
