#pragma once

#include <cstdint>
#include <limits>

namespace regmdp {

/// SplitMix64 finaliser; used to derive seeds for independent streams.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/**
 * xoshiro256** generator with explicit stream splitting.
 *
 * The output sequence is fully specified (no dependence on the standard
 * library's distribution implementations), so seeded instances are bitwise
 * identical across platforms. A generator is identified by (seed, stream): the
 * four state words are produced by SplitMix64 from seed ^ mix(stream).
 *
 * Satisfies UniformRandomBitGenerator so it also works with <random>, but the
 * library itself only draws through uniform() and below().
 */
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept {
    std::uint64_t sm = stream;
    std::uint64_t x = seed ^ splitmix64(sm);
    for (auto& w : s_) w = splitmix64(x);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform double on [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n) by rejection (Lemire's method).
  std::uint64_t below(std::uint64_t n) noexcept {
    __uint128_t m = static_cast<__uint128_t>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<__uint128_t>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// Stream identifiers. Keeping them in one place documents which draws are
// independent of which.
namespace streams {
inline constexpr std::uint64_t kSupport = 1;
inline constexpr std::uint64_t kRewardPair = 2;
inline constexpr std::uint64_t kRewardState = 3;
inline constexpr std::uint64_t kConstraintPairs = 4;
inline constexpr std::uint64_t kEvalNoise = 5;
}  // namespace streams

}  // namespace regmdp
