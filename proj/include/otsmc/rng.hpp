#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace otsmc {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Component tags for stream derivation. Values are part of the
/// reproducibility contract; never renumber.
enum class Stream : std::uint64_t {
  kInitial = 1,
  kMutation = 2,
  kResampling = 3,
  kOracle = 4,
  kFixture = 5,
  kTest = 99,
};

/// Deterministic child seed for (seed, component, keys...). Streams never
/// depend on evaluation order, so serial and threaded runs agree bit for bit.
inline std::uint64_t derive_seed(std::uint64_t seed, Stream component,
                                 std::initializer_list<std::uint64_t> keys = {}) {
  std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(component)));
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t seed, Stream component,
                    std::initializer_list<std::uint64_t> keys = {}) {
  return Rng(derive_seed(seed, component, keys));
}

}  // namespace otsmc
