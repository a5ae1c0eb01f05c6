#pragma once

#include <cmath>
#include <cstdint>

namespace noisyseg {

// SplitMix64 generator. Chosen over std::mt19937 so that every random
// decision in the library is bit-stable across platforms and standard
// library versions; checkpoints and logs depend on that.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Derives an independent stream from (seed, stream). Used to key
  // per-entry / per-iteration randomness so runs can resume mid-way.
  static Rng keyed(std::uint64_t seed, std::uint64_t stream) {
    Rng r(mix(mix(seed + 0x632be59bd9b4e019ull) ^ mix(stream)));
    return r;
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [lo, hi] inclusive (Lemire's unbiased method).
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    std::uint64_t x = next_u64();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * span;
    std::uint64_t l = static_cast<std::uint64_t>(m);
    if (l < span) {
      const std::uint64_t t = (0 - span) % span;
      while (l < t) {
        x = next_u64();
        m = static_cast<unsigned __int128>(x) * span;
        l = static_cast<std::uint64_t>(m);
      }
    }
    return lo + static_cast<int>(m >> 64);
  }

  bool coin(double p_true = 0.5) { return next_double() < p_true; }

  // Standard normal via Box-Muller; always consumes exactly two draws.
  double normal() {
    const double u1 = 1.0 - next_double();  // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace noisyseg
