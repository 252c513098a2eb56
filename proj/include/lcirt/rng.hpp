#pragma once

#include <array>
#include <cstdint>

namespace lcirt {

// Deterministic, portable PRNG stack: splitmix64 for seeding/keying,
// xoshiro256** for the stream. Integer-only state transitions, so the same
// seed yields the same draws on every platform.

struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

class Xoshiro256ss {
 public:
  explicit Xoshiro256ss(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm.next();
  }

  std::uint64_t next() {
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

  // Uniform double in [0, 1) with 53 random bits.
  double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> s_;
};

// Key for an independent substream (per start, per subject, ...). Hashing the
// (seed, index) pair keeps substreams deterministic under any scheduling.
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t index) {
  SplitMix64 sm(seed);
  std::uint64_t h = sm.next();
  SplitMix64 sm2(h + index * 0x9e3779b97f4a7c15ULL);
  return sm2.next();
}

}  // namespace lcirt
