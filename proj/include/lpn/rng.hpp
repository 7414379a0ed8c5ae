// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>

namespace lpn {

namespace detail {

// SplitMix64 finalizer. Bijective on 64-bit words, passes BigCrush when fed
// a Weyl sequence.
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr uint64_t kWeylGamma = 0x9E3779B97F4A7C15ull;

}  // namespace detail

/// Counter-based random stream. Output i is a pure function of (key, i), so
/// identical keys replay identical sequences regardless of thread schedule,
/// and substreams derived from (key, index) are independent of one another.
///
/// Streams are keyed by a seed plus a path of tags, e.g.
/// RngStream::from(seed, {kTagDropout, epoch, sample}).
class RngStream {
 public:
  explicit RngStream(uint64_t key) : key_(key) {}

  static RngStream from(uint64_t seed, std::initializer_list<uint64_t> path) {
    uint64_t k = detail::mix64(seed + detail::kWeylGamma);
    for (uint64_t p : path) k = detail::mix64(k ^ (p + detail::kWeylGamma));
    return RngStream(k);
  }

  /// Child stream with its own counter; derivation is pure in (key, index).
  RngStream substream(uint64_t index) const {
    return RngStream(detail::mix64(key_ ^ (index * detail::kWeylGamma + 0x6A09E667F3BCC909ull)));
  }

  uint64_t next_u64() { return detail::mix64(key_ + ++counter_ * detail::kWeylGamma); }

  /// Uniform in [0,1) with 53 random mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Unbiased integer in [0, n). n must be >= 1.
  uint64_t below(uint64_t n) {
    // Lemire multiply-shift with rejection of the biased low range.
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    uint64_t lo = static_cast<uint64_t>(m);
    if (lo < n) {
      uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

 private:
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

// Stream purpose tags. Fixed constants so checkpoints of the same seed stay
// reproducible across builds.
inline constexpr uint64_t kTagInit = 0x01;
inline constexpr uint64_t kTagShuffle = 0x02;
inline constexpr uint64_t kTagAugment = 0x03;
inline constexpr uint64_t kTagDropout = 0x04;

}  // namespace lpn
