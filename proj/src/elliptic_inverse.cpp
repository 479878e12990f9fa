#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "otsmc/errors.hpp"
#include "otsmc/models.hpp"

namespace otsmc {

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;

// Bilinear element stiffness for the unit-coefficient Laplacian on a square,
// local nodes counter-clockwise from the lower-left corner. Independent of h
// in two dimensions.
constexpr std::array<std::array<double, 4>, 4> kElementStiffness = {{
    {4.0 / 6, -1.0 / 6, -2.0 / 6, -1.0 / 6},
    {-1.0 / 6, 4.0 / 6, -1.0 / 6, -2.0 / 6},
    {-2.0 / 6, -1.0 / 6, 4.0 / 6, -1.0 / 6},
    {-1.0 / 6, -2.0 / 6, -1.0 / 6, 4.0 / 6},
}};

struct System {
  SparseMatrix matrix;
  Vector load;
};

System assemble(const Eigen::Ref<const Vector>& u, std::size_t n, double h, double biot) {
  const auto node = [n](std::size_t ix, std::size_t iy) { return static_cast<int>(iy * n + ix); };
  const Vector k_nodes = u.array().exp();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(16 * (n - 1) * (n - 1) + 12 * (n - 1));
  for (std::size_t iy = 0; iy + 1 < n; ++iy) {
    for (std::size_t ix = 0; ix + 1 < n; ++ix) {
      const std::array<int, 4> ids = {node(ix, iy), node(ix + 1, iy), node(ix + 1, iy + 1), node(ix, iy + 1)};
      const double k = 0.25 * (k_nodes(ids[0]) + k_nodes(ids[1]) + k_nodes(ids[2]) + k_nodes(ids[3]));
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) triplets.emplace_back(ids[a], ids[b], k * kElementStiffness[a][b]);
    }
  }
  Vector load = Vector::Zero(static_cast<Eigen::Index>(n * n));
  const double m_diag = biot * h / 3.0;
  const double m_off = biot * h / 6.0;
  const auto robin_edge = [&](int a, int b) {
    triplets.emplace_back(a, a, m_diag);
    triplets.emplace_back(b, b, m_diag);
    triplets.emplace_back(a, b, m_off);
    triplets.emplace_back(b, a, m_off);
  };
  for (std::size_t t = 0; t + 1 < n; ++t) {
    robin_edge(node(0, t), node(0, t + 1));          // left
    robin_edge(node(n - 1, t), node(n - 1, t + 1));  // right
    robin_edge(node(t, n - 1), node(t + 1, n - 1));  // top
    load(node(t, 0)) += 0.5 * h;                     // unit inflow on the bottom edge
    load(node(t + 1, 0)) += 0.5 * h;
  }
  SparseMatrix matrix(static_cast<Eigen::Index>(n * n), static_cast<Eigen::Index>(n * n));
  matrix.setFromTriplets(triplets.begin(), triplets.end());
  return {std::move(matrix), std::move(load)};
}

void validate(const EllipticConfig& cfg) {
  if (cfg.grid < 3) throw std::invalid_argument("EllipticInverse: grid must have at least 3 nodes per side");
  if (!(cfg.biot > 0)) throw std::invalid_argument("EllipticInverse: Biot number must be > 0");
  if (!(cfg.delta > 0)) throw std::invalid_argument("EllipticInverse: delta must be > 0");
  if (!(cfg.gamma >= 0)) throw std::invalid_argument("EllipticInverse: gamma must be >= 0");
  if (!(cfg.s > 1)) throw std::invalid_argument("EllipticInverse: s must be > 1");
  if (!(cfg.noise_ratio > 0)) throw std::invalid_argument("EllipticInverse: noise ratio must be > 0");
  if (cfg.obs_per_side < 1) throw std::invalid_argument("EllipticInverse: need at least one observation");
}

std::vector<std::array<double, 2>> lattice_points(std::size_t per_side) {
  std::vector<std::array<double, 2>> points;
  const double step = 1.0 / static_cast<double>(per_side + 1);
  for (std::size_t j = 1; j <= per_side; ++j)
    for (std::size_t i = 1; i <= per_side; ++i) points.push_back({i * step, j * step});
  return points;
}

}  // namespace

EllipticInverse::EllipticInverse(const EllipticConfig& cfg) : EllipticInverse(cfg, make_synthetic_data(cfg)) {}

EllipticInverse::EllipticInverse(const EllipticConfig& cfg, EllipticData data)
    : cfg_(cfg), n_(cfg.grid), h_(0.0), data_(std::move(data)) {
  validate(cfg);
  h_ = 1.0 / static_cast<double>(n_ - 1);
  for (const auto& p : data_.points) {
    if (!(p[0] > 0 && p[0] < 1 && p[1] > 0 && p[1] < 1))
      throw std::invalid_argument("EllipticInverse: observation points must be interior");
  }
  if (data_.data.size() != 0 && static_cast<std::size_t>(data_.data.size()) != data_.points.size())
    throw std::invalid_argument("EllipticInverse: data length does not match observation points");
  if (data_.data.size() != 0 && !(data_.noise_std > 0))
    throw std::invalid_argument("EllipticInverse: noise standard deviation must be > 0");
  build_prior();
}

void EllipticInverse::build_prior() {
  const auto n = static_cast<Eigen::Index>(n_);
  prior_mean_ = Vector::Zero(n * n);
  // Neumann graph Laplacian in 1D: eigenvectors are DCT-II columns.
  Vector lam1(n);
  Eigen::MatrixXd vec1(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double s = std::sin(std::numbers::pi * static_cast<double>(k) / (2.0 * n));
    lam1(k) = 4.0 * s * s / (h_ * h_);
    const double c = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (Eigen::Index i = 0; i < n; ++i)
      vec1(i, k) = c * std::cos(std::numbers::pi * static_cast<double>(k) * (i + 0.5) / n);
  }
  eigenvalues_.resize(n * n);
  basis_.resize(n * n, n * n);
  for (Eigen::Index l = 0; l < n; ++l) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::Index mode = l * n + k;
      eigenvalues_(mode) = cfg_.delta + cfg_.gamma * (lam1(k) + lam1(l));
      for (Eigen::Index iy = 0; iy < n; ++iy)
        for (Eigen::Index ix = 0; ix < n; ++ix) basis_(iy * n + ix, mode) = vec1(ix, k) * vec1(iy, l);
    }
  }
  prior_scale_ = eigenvalues_.array().pow(-0.5 * cfg_.s);
}

Vector EllipticInverse::prior_sample(Rng& rng) const {
  std::normal_distribution<double> normal;
  Vector xi(prior_scale_.size());
  for (auto& x : xi) x = normal(rng);
  return prior_mean_ + basis_ * prior_scale_.cwiseProduct(xi);
}

double EllipticInverse::prior_log_density(const Eigen::Ref<const Vector>& u) const {
  const Vector coeffs = basis_.transpose() * (u - prior_mean_);
  return -0.5 * (coeffs.array().square() / prior_scale_.array().square()).sum();
}

Vector EllipticInverse::solve_forward(const Eigen::Ref<const Vector>& u) const {
  if (static_cast<std::size_t>(u.size()) != n_ * n_)
    throw std::invalid_argument("solve_forward: field has the wrong number of nodes");
  if (!u.allFinite()) throw SolverFailure("solve_forward: non-finite log-conductivity");
  const System sys = assemble(u, n_, h_, cfg_.biot);
  Eigen::SimplicialLLT<SparseMatrix> solver(sys.matrix);
  if (solver.info() != Eigen::Success) throw SolverFailure("solve_forward: factorization failed");
  Vector w = solver.solve(sys.load);
  Vector r = sys.load - sys.matrix * w;
  if (r.lpNorm<Eigen::Infinity>() > 1e-10) {
    w += solver.solve(r);
    r = sys.load - sys.matrix * w;
  }
  if (!w.allFinite() || r.lpNorm<Eigen::Infinity>() > 1e-10)
    throw SolverFailure("solve_forward: residual above 1e-10");
  return w;
}

double EllipticInverse::residual_norm(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& w) const {
  const System sys = assemble(u, n_, h_, cfg_.biot);
  return (sys.load - sys.matrix * w).lpNorm<Eigen::Infinity>();
}

Vector EllipticInverse::observe(const Eigen::Ref<const Vector>& w) const {
  Vector out(static_cast<Eigen::Index>(data_.points.size()));
  for (std::size_t p = 0; p < data_.points.size(); ++p) {
    const double gx = data_.points[p][0] / h_;
    const double gy = data_.points[p][1] / h_;
    const std::size_t ix = std::min(static_cast<std::size_t>(gx), n_ - 2);
    const std::size_t iy = std::min(static_cast<std::size_t>(gy), n_ - 2);
    const double tx = gx - static_cast<double>(ix);
    const double ty = gy - static_cast<double>(iy);
    const auto at = [&](std::size_t x, std::size_t y) { return w(static_cast<Eigen::Index>(y * n_ + x)); };
    out(static_cast<Eigen::Index>(p)) = (1 - tx) * (1 - ty) * at(ix, iy) + tx * (1 - ty) * at(ix + 1, iy) +
                                        tx * ty * at(ix + 1, iy + 1) + (1 - tx) * ty * at(ix, iy + 1);
  }
  return out;
}

double EllipticInverse::log_potential(const Eigen::Ref<const Vector>& u) const {
  if (data_.data.size() == 0) throw std::logic_error("log_potential: model has no data");
  const Vector residual = data_.data - forward_map(u);
  return -0.5 * residual.squaredNorm() / (data_.noise_std * data_.noise_std);
}

double EllipticInverse::robin_boundary_integral(const Eigen::Ref<const Vector>& w) const {
  double total = 0.0;
  const auto at = [&](std::size_t x, std::size_t y) { return w(static_cast<Eigen::Index>(y * n_ + x)); };
  for (std::size_t t = 0; t + 1 < n_; ++t) {
    total += 0.5 * h_ * (at(0, t) + at(0, t + 1));
    total += 0.5 * h_ * (at(n_ - 1, t) + at(n_ - 1, t + 1));
    total += 0.5 * h_ * (at(t, n_ - 1) + at(t + 1, n_ - 1));
  }
  return total;
}

Vector EllipticInverse::sine_field(std::size_t n, double amplitude) {
  const double h = 1.0 / static_cast<double>(n - 1);
  Vector u(static_cast<Eigen::Index>(n * n));
  for (std::size_t iy = 0; iy < n; ++iy)
    for (std::size_t ix = 0; ix < n; ++ix)
      u(static_cast<Eigen::Index>(iy * n + ix)) =
          amplitude * std::sin(std::numbers::pi * ix * h) * std::sin(std::numbers::pi * iy * h);
  return u;
}

EllipticData EllipticInverse::make_synthetic_data(const EllipticConfig& cfg) {
  validate(cfg);
  EllipticData data;
  data.points = lattice_points(cfg.obs_per_side);
  data.truth = sine_field(cfg.grid, cfg.truth_amplitude);
  const EllipticInverse noiseless(cfg, EllipticData{data.points, data.truth, Vector(), 0.0});
  const Vector clean = noiseless.forward_map(data.truth);
  data.noise_std = cfg.noise_ratio * clean.cwiseAbs().maxCoeff();
  Rng rng = make_rng(cfg.data_seed, Stream::kFixture);
  std::normal_distribution<double> normal;
  data.data = clean;
  for (auto& d : data.data) d += data.noise_std * normal(rng);
  return data;
}

}  // namespace otsmc
