#pragma once

#include <cmath>
#include <cstdint>

namespace sma {

/// Deterministic 64-bit generator (splitmix64 core). The standard <random>
/// engines are portable but the distributions are not, so uniform/gaussian
/// draws are implemented here directly: identical (seed, stream) pairs yield
/// identical sequences on every platform.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream_id)
      : state_(mix64(mix64(seed) ^ mix64(~stream_id))) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64_final(state_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n), n >= 1. Rejection sampling keeps it unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal via Box-Muller; the paired draw is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    return mix64_final(z);
  }

  static std::uint64_t mix64_final(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Stream ids partition the audit's randomness so that adding draws to one
/// consumer never shifts another.
namespace rng_stream {
inline constexpr std::uint64_t kMasks = 1;
inline constexpr std::uint64_t kImageNoise = 2;
}  // namespace rng_stream

inline Rng seeded_rng(std::uint64_t seed, std::uint64_t stream_id) {
  return Rng(seed, stream_id);
}

}  // namespace sma
