#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "otsmc/ensemble.hpp"
#include "otsmc/rng.hpp"

namespace otsmc {

struct Moments {
  Vector mean;
  Vector diag_variance;
};

/// A Bayesian target written as d(posterior)/d(mu0)(u) ∝ exp(V(u)) with a
/// Gaussian initial law mu0. Implementations are immutable after
/// construction and safe to share between threads.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;

  virtual Vector sample_initial(Rng& rng) const = 0;
  /// V(u), the log-likelihood relative to mu0.
  virtual double log_potential(const Eigen::Ref<const Vector>& u) const = 0;
  /// log mu0(u) up to an additive constant.
  virtual double log_initial_density(const Eigen::Ref<const Vector>& u) const = 0;
  virtual Vector initial_mean() const = 0;
  /// Posterior mean and marginal variances when known in closed form.
  virtual std::optional<Moments> exact_moments() const { return std::nullopt; }
};

/// mu0 = N(0, I) in R^D, target N(0, Gamma) with the squared-exponential
/// banded covariance Gamma_ij = sigma^2 exp(-(j - i)^2 / (2 l^2)).
class GaussianToy final : public TargetModel {
 public:
  /// Relative diagonal nugget added to Gamma; the covariance is numerically
  /// singular for long length scales without it.
  static constexpr double kNugget = 1e-8;

  GaussianToy(std::size_t dim, double sigma, double length_scale);

  std::size_t dimension() const override { return dim_; }
  std::string name() const override { return "gaussian"; }
  Vector sample_initial(Rng& rng) const override;
  double log_potential(const Eigen::Ref<const Vector>& u) const override;
  double log_initial_density(const Eigen::Ref<const Vector>& u) const override;
  Vector initial_mean() const override { return Vector::Zero(dim_); }
  std::optional<Moments> exact_moments() const override;

  const Eigen::MatrixXd& covariance() const { return cov_; }
  /// Draw from the exact target N(0, Gamma).
  Vector sample_target(Rng& rng) const;
  double sigma() const { return sigma_; }
  double length_scale() const { return length_scale_; }

 private:
  std::size_t dim_;
  double sigma_;
  double length_scale_;
  Eigen::MatrixXd cov_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
};

/// Parameters of the elliptic inverse problem on the unit square.
struct EllipticConfig {
  std::size_t grid = 10;  ///< nodes per side
  double biot = 0.1;
  double delta = 1.0;     ///< prior: C = (delta I - gamma Lap)^(-s)
  double gamma = 0.1;
  double s = 2.0;
  double noise_ratio = 0.05;  ///< lambda = noise_ratio * max|d_clean|
  double truth_amplitude = 1.0;
  std::size_t obs_per_side = 5;
  std::uint64_t data_seed = 20190501;
};

/// Synthetic data set for the inverse problem.
struct EllipticData {
  std::vector<std::array<double, 2>> points;
  Vector truth;  ///< nodal values of the true log-conductivity
  Vector data;   ///< noisy observations
  double noise_std = 0.0;
};

/// Log-conductivity u (nodal, n x n grid) -> temperature w solving
/// -div(e^u grad w) = 0 with inflow 1 on the bottom edge and Robin
/// outflow Bi w on the other three edges; bilinear elements with the cell
/// conductivity taken as the mean of e^u at its four nodes.
class EllipticInverse final : public TargetModel {
 public:
  /// Builds the model and generates its synthetic data set.
  explicit EllipticInverse(const EllipticConfig& cfg);
  /// Builds the model around an existing data set (e.g. a loaded fixture).
  EllipticInverse(const EllipticConfig& cfg, EllipticData data);

  std::size_t dimension() const override { return n_ * n_; }
  std::string name() const override { return "pde"; }
  Vector sample_initial(Rng& rng) const override { return prior_sample(rng); }
  double log_potential(const Eigen::Ref<const Vector>& u) const override;
  double log_initial_density(const Eigen::Ref<const Vector>& u) const override {
    return prior_log_density(u);
  }
  Vector initial_mean() const override { return prior_mean_; }

  /// Nodal solution, index = iy * n + ix; x = ix h, y = iy h.
  Vector solve_forward(const Eigen::Ref<const Vector>& u) const;
  /// Bilinear interpolation of w at the observation points.
  Vector observe(const Eigen::Ref<const Vector>& w) const;
  Vector forward_map(const Eigen::Ref<const Vector>& u) const { return observe(solve_forward(u)); }

  Vector prior_sample(Rng& rng) const;
  double prior_log_density(const Eigen::Ref<const Vector>& u) const;

  /// Trapezoid integral of w over the Robin boundary.
  double robin_boundary_integral(const Eigen::Ref<const Vector>& w) const;
  /// Residual ||K w - f||_inf of the last assembled system for u.
  double residual_norm(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& w) const;

  std::size_t grid() const { return n_; }
  double spacing() const { return h_; }
  const EllipticConfig& config() const { return cfg_; }
  const EllipticData& data() const { return data_; }
  /// Eigenvalues of delta I - gamma Lap_h (Neumann), one per mode.
  const Vector& operator_eigenvalues() const { return eigenvalues_; }
  /// Orthonormal eigenvectors as columns.
  const Eigen::MatrixXd& eigenvectors() const { return basis_; }

  /// Smooth synthetic truth amplitude * sin(pi x) sin(pi y) on the grid.
  static Vector sine_field(std::size_t n, double amplitude);
  static EllipticData make_synthetic_data(const EllipticConfig& cfg);

 private:
  void build_prior();

  EllipticConfig cfg_;
  std::size_t n_;
  double h_;
  EllipticData data_;
  Vector prior_mean_;
  Vector eigenvalues_;
  Eigen::MatrixXd basis_;
  Vector prior_scale_;  // eigenvalue^(-s/2)
};

}  // namespace otsmc
