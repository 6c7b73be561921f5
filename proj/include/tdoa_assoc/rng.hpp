#pragma once

#include <cmath>
#include <cstdint>

namespace tdoa_assoc {

// SplitMix64 step; used for seeding and for deriving independent streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic stream seed from a master seed and up to two indices
/// (e.g. grid point and trial number). Stable across platforms.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t h = splitmix64(master ^ 0x8f1bbcdcbfa53e0bULL);
  h = splitmix64(h ^ splitmix64(a));
  h = splitmix64(h ^ splitmix64(b ^ 0x2545f4914f6cdd1dULL));
  return h;
}

/// xoshiro256++ with hand-rolled distributions, so that every draw is
/// bit-reproducible independent of the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : state_) {
      x = splitmix64(x);
      w = x;
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  /// Uniform integer in [0, n). Lemire's multiply-shift; bias is negligible
  /// for the ranges used here and the mapping is fully deterministic.
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller (cosine branch only).
  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double sigma) { return sigma * normal(); }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
  std::uint64_t state_[4];
};

}  // namespace tdoa_assoc
