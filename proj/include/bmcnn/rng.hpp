#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace bmcnn {

/// SplitMix64 output function.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Combines a base seed with stream identifiers into a new, well-separated seed.
template <typename... Ids>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Ids... ids) {
  std::uint64_t s = mix64(seed + 0x9E3779B97F4A7C15ULL);
  ((s = mix64(s ^ (static_cast<std::uint64_t>(ids) + 0x9E3779B97F4A7C15ULL + (s << 6) + (s >> 2)))), ...);
  return s;
}

/// Counter-based generator "splitmix64-ctr / Box-Muller v1".
///
/// Draw number `i` of a stream with seed `s` is mix64(s + (i + 1) * 0x9E3779B97F4A7C15),
/// i.e. the i-th output of a SplitMix64 sequence started at `s`, so any element can be
/// produced without generating its predecessors. Gaussian sample `i` consumes draws 2i
/// and 2i + 1: u1 = ((d0 >> 11) + 1) * 2^-53 in (0, 1], u2 = (d1 >> 11) * 2^-53 in [0, 1),
/// z = sqrt(-2 ln u1) * cos(2 pi u2). The sine branch is discarded.
class CounterRng {
 public:
  static constexpr const char* kAlgorithm = "splitmix64-ctr/box-muller v1";

  explicit constexpr CounterRng(std::uint64_t seed) : seed_(seed) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const {
    return mix64(seed_ + (counter + 1) * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform in [0, 1).
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Standard normal sample number `index`.
  double gaussian(std::uint64_t index) const {
    const double u1 = static_cast<double>((bits(2 * index) >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(bits(2 * index + 1) >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n), n > 0 (multiply-shift, negligible bias for small n).
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(bits(counter)) * n) >> 64);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

}  // namespace bmcnn
