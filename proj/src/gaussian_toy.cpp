#include <cmath>
#include <random>
#include <stdexcept>

#include "otsmc/models.hpp"

namespace otsmc {

GaussianToy::GaussianToy(std::size_t dim, double sigma, double length_scale)
    : dim_(dim), sigma_(sigma), length_scale_(length_scale) {
  if (dim < 1) throw std::invalid_argument("GaussianToy: dimension must be >= 1");
  if (!(sigma > 0) || !std::isfinite(sigma)) throw std::invalid_argument("GaussianToy: sigma must be > 0");
  if (!(length_scale > 0) || !std::isfinite(length_scale))
    throw std::invalid_argument("GaussianToy: length scale must be > 0");
  const auto d = static_cast<Eigen::Index>(dim);
  const double var = sigma * sigma;
  cov_.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double gap = static_cast<double>(j - i);
      cov_(i, j) = var * std::exp(-gap * gap / (2.0 * length_scale * length_scale));
    }
    cov_(i, i) += kNugget * var;
  }
  chol_.compute(cov_);
  if (chol_.info() != Eigen::Success) throw std::invalid_argument("GaussianToy: covariance is not positive definite");
}

Vector GaussianToy::sample_initial(Rng& rng) const {
  std::normal_distribution<double> normal;
  Vector u(dim_);
  for (auto& x : u) x = normal(rng);
  return u;
}

Vector GaussianToy::sample_target(Rng& rng) const {
  return chol_.matrixL() * sample_initial(rng);
}

double GaussianToy::log_potential(const Eigen::Ref<const Vector>& u) const {
  const Vector white = chol_.matrixL().solve(u);
  return -0.5 * (white.squaredNorm() - u.squaredNorm());
}

double GaussianToy::log_initial_density(const Eigen::Ref<const Vector>& u) const {
  return -0.5 * u.squaredNorm();
}

std::optional<Moments> GaussianToy::exact_moments() const {
  return Moments{Vector::Zero(dim_), cov_.diagonal()};
}

}  // namespace otsmc
