#pragma once

#include <cmath>
#include <cstdint>

namespace r1sim {

// Counter-free splitmix64 stream. Used everywhere a seeded draw is needed so
// results do not depend on the standard library's distribution internals.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next() % n; }

  // Standard normal via Box-Muller (one value per call, no caching).
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  // boost-style mix, widened to 64 bits
  a ^= b + 0x9e3779b97f4a7c15ULL + (a << 12) + (a >> 4);
  return a * 0xff51afd7ed558ccdULL;
}

// Stable per-(seed, rollout, agent) stream id so adding or removing agents
// does not perturb the draws of the remaining ones.
inline std::uint64_t stream_seed(std::uint64_t base_seed, std::uint64_t rollout_index,
                                 std::uint64_t agent_id) {
  return hash_combine(hash_combine(base_seed, rollout_index + 1), agent_id + 1);
}

}  // namespace r1sim
