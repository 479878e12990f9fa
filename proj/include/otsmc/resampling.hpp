#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "otsmc/ensemble.hpp"
#include "otsmc/rng.hpp"

namespace otsmc {

using ResampleIndices = std::vector<std::size_t>;

enum class ResamplingScheme { kMultinomial, kStratified, kSystematic };

ResamplingScheme parse_resampling_scheme(std::string_view name);
std::string_view to_string(ResamplingScheme scheme);

/// N i.i.d. draws from Categorical(weights).
ResampleIndices resample_multinomial(const Eigen::Ref<const Vector>& weights, Rng& rng);

/// One uniform per stratum, (i + U_i) / N.
ResampleIndices resample_stratified(const Eigen::Ref<const Vector>& weights, Rng& rng);

/// A single uniform shared by all strata, (i + U) / N.
ResampleIndices resample_systematic(const Eigen::Ref<const Vector>& weights, Rng& rng);

ResampleIndices resample(ResamplingScheme scheme, const Eigen::Ref<const Vector>& weights, Rng& rng);

/// Equally weighted ensemble made of the selected rows.
Ensemble gather(const Ensemble& e, const ResampleIndices& indices);

}  // namespace otsmc
