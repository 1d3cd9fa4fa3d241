#pragma once

// Portable seeded RNG: xoshiro256++ (Blackman/Vigna) seeded through splitmix64.
// All stochastic behavior in the toolkit goes through this generator so that
// identical seeds give identical bits on every platform. std::random
// distributions are implementation-defined and must not be used here.

#include <cmath>
#include <cstdint>

namespace toothdet {

namespace detail {
inline uint64_t rotl64(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}

struct SplitMix64 {
  uint64_t state;
  explicit SplitMix64(uint64_t seed) : state(seed) {}
  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

class Rng {
public:
  explicit Rng(uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm.next();
    have_cached_ = false;
  }

  uint64_t next_u64() {
    const uint64_t result = detail::rotl64(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl64(s_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive. Modulo bias is irrelevant here;
  // determinism is what matters.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = uint64_t(hi - lo) + 1;
    return lo + int64_t(next_u64() % span);
  }

  // Standard normal via Box-Muller; consumes two uniforms per pair.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = double(next_u64() >> 11) * 0x1.0p-53;        // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

private:
  uint64_t s_[4];
  double cached_ = 0.0;
  bool have_cached_;
};

// Derives an independent child seed, e.g. one per phantom index, so that
// parallel generation at any job count reproduces the serial bit stream.
inline uint64_t child_seed(uint64_t seed, uint64_t index) {
  SplitMix64 sm(seed ^ (0x632be59bd9b4e019ULL + index * 0x9e3779b97f4a7c15ULL));
  return sm.next();
}

}  // namespace toothdet
