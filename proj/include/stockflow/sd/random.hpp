#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "stockflow/error.hpp"

namespace stockflow::sd {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view key) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : key) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seed of the independent stream owned by primitive `key` under `root`.
/// Streams depend only on (root, key), so adding primitives never shifts
/// the draws of existing ones.
constexpr std::uint64_t stream_seed(std::uint64_t root, std::string_view key) noexcept {
  return splitmix64(root ^ splitmix64(fnv1a64(key)));
}

inline Rng make_stream(std::uint64_t root, std::string_view key) {
  return Rng{stream_seed(root, key)};
}

template <std::uniform_random_bit_generator G>
std::int64_t sample_poisson(G& rng, double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) {
    throw Error(Errc::NegativeMean, "poisson mean must be finite and >= 0, got " + std::to_string(mean));
  }
  if (mean == 0.0) return 0;
  std::poisson_distribution<std::int64_t> dist(mean);
  return dist(rng);
}

/// Normal draw clipped into [lo, hi]. Clipping rather than rejecting
/// out-of-range values keeps exactly one normal variate per call.
template <std::uniform_random_bit_generator G>
double sample_truncated_normal(G& rng, double mu, double sigma, double lo, double hi) {
  if (lo > hi) {
    throw Error(Errc::BadBounds, "lo " + std::to_string(lo) + " > hi " + std::to_string(hi));
  }
  if (!(sigma >= 0.0)) {
    throw Error(Errc::BadBounds, "sigma must be >= 0, got " + std::to_string(sigma));
  }
  if (sigma == 0.0) return std::clamp(mu, lo, hi);
  std::normal_distribution<double> dist(mu, sigma);
  return std::clamp(dist(rng), lo, hi);
}

}  // namespace stockflow::sd
