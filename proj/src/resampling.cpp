#include "otsmc/resampling.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>

namespace otsmc {

ResamplingScheme parse_resampling_scheme(std::string_view name) {
  if (name == "multinomial") return ResamplingScheme::kMultinomial;
  if (name == "stratified") return ResamplingScheme::kStratified;
  if (name == "systematic") return ResamplingScheme::kSystematic;
  throw std::invalid_argument("unknown resampling scheme '" + std::string(name) + "'");
}

std::string_view to_string(ResamplingScheme scheme) {
  switch (scheme) {
    case ResamplingScheme::kMultinomial: return "multinomial";
    case ResamplingScheme::kStratified: return "stratified";
    case ResamplingScheme::kSystematic: return "systematic";
  }
  return "unknown";
}

namespace {

// Inverse CDF for sorted draws in [0, 1): first index whose cumulative weight
// strictly exceeds the draw, scanning upward.
ResampleIndices invert_sorted(const Eigen::Ref<const Vector>& weights, const std::vector<double>& draws) {
  const std::size_t n = static_cast<std::size_t>(weights.size());
  ResampleIndices out(draws.size());
  std::size_t j = 0;
  double cumulative = weights(0);
  for (std::size_t k = 0; k < draws.size(); ++k) {
    while (cumulative <= draws[k] && j + 1 < n) cumulative += weights(++j);
    out[k] = j;
  }
  return out;
}

void check(const Eigen::Ref<const Vector>& weights) {
  if (weights.size() == 0) throw std::invalid_argument("resample: empty weight vector");
}

}  // namespace

ResampleIndices resample_multinomial(const Eigen::Ref<const Vector>& weights, Rng& rng) {
  check(weights);
  const std::size_t n = static_cast<std::size_t>(weights.size());
  // Sorted uniforms from normalized exponential spacings, so the inverse-CDF
  // pass stays linear.
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> draws(n);
  double total = 0.0;
  for (auto& d : draws) {
    total += expo(rng);
    d = total;
  }
  total += expo(rng);
  for (auto& d : draws) d /= total;
  ResampleIndices sorted = invert_sorted(weights, draws);
  // Random order so that the indices are exchangeable, like i.i.d. draws.
  std::shuffle(sorted.begin(), sorted.end(), rng);
  return sorted;
}

ResampleIndices resample_stratified(const Eigen::Ref<const Vector>& weights, Rng& rng) {
  check(weights);
  const std::size_t n = static_cast<std::size_t>(weights.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> draws(n);
  for (std::size_t i = 0; i < n; ++i) draws[i] = (static_cast<double>(i) + unif(rng)) / static_cast<double>(n);
  return invert_sorted(weights, draws);
}

ResampleIndices resample_systematic(const Eigen::Ref<const Vector>& weights, Rng& rng) {
  check(weights);
  const std::size_t n = static_cast<std::size_t>(weights.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  std::vector<double> draws(n);
  for (std::size_t i = 0; i < n; ++i) draws[i] = (static_cast<double>(i) + u) / static_cast<double>(n);
  return invert_sorted(weights, draws);
}

ResampleIndices resample(ResamplingScheme scheme, const Eigen::Ref<const Vector>& weights, Rng& rng) {
  switch (scheme) {
    case ResamplingScheme::kMultinomial: return resample_multinomial(weights, rng);
    case ResamplingScheme::kStratified: return resample_stratified(weights, rng);
    case ResamplingScheme::kSystematic: return resample_systematic(weights, rng);
  }
  throw std::invalid_argument("resample: unknown scheme");
}

Ensemble gather(const Ensemble& e, const ResampleIndices& indices) {
  Positions out(static_cast<Eigen::Index>(indices.size()), e.positions().cols());
  for (std::size_t k = 0; k < indices.size(); ++k) out.row(k) = e.positions().row(indices[k]);
  return Ensemble(std::move(out));
}

}  // namespace otsmc
