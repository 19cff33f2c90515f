#pragma once
// Deterministic, splittable random source.
//
// Every consumer derives its own substream from (seed, labels), so results
// never depend on the order in which components happen to draw, and sweep
// points / replications can run in parallel without shared mutable state.
// Two sources built from the same seed and labels produce bit-identical
// sequences.

#include <cstdint>
#include <bit>
#include <cmath>

namespace hetmac {

// splitmix64 finalizer (Steele/Lea/Flood); bijective full-avalanche mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

class RandomSource {
public:
  explicit RandomSource(std::uint64_t seed) : key_(mix64(seed + kSalt)) {}

  // Independent substream for a labelled entity, e.g. (kind, node id, frame).
  // Derivation uses only the stream key, never the draw counter, so the
  // labelling is stable no matter how much the parent has been used.
  RandomSource stream(std::uint64_t kind, std::uint64_t id = 0,
                      std::uint64_t frame = 0) const {
    std::uint64_t k = key_;
    k = mix64(k + kind);
    k = mix64(k + id);
    k = mix64(k + frame);
    return RandomSource(k, 0);
  }

  std::uint64_t next_u64() {
    ctr_ += kGamma;
    return mix64(key_ + ctr_);
  }

  // Uniform in [0, 1), 53 random bits.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n); n >= 1. Rejection keeps it exactly uniform.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  bool bernoulli(double p) { return next_double() < p; }

  // Knuth multiplication method, chunked so large means do not underflow.
  int poisson(double lambda) {
    int k = 0;
    double remaining = lambda;
    double prod = 1.0;
    while (true) {
      prod *= next_double();
      while (prod < 1.0 && remaining > 0.0) {
        const double chunk = remaining > 500.0 ? 500.0 : remaining;
        prod *= std::exp(chunk);
        remaining -= chunk;
      }
      if (prod <= 1.0) return k;
      ++k;
    }
  }

  // P(k) = 2^-(k+1): number of consecutive one bits at the bottom of a
  // uniform draw. The 64-bit tail (probability 2^-64) is folded into 64.
  int geometric_halving() { return std::countr_one(next_u64()); }

private:
  RandomSource(std::uint64_t key, std::uint64_t ctr) : key_(key), ctr_(ctr) {}

  static constexpr std::uint64_t kSalt = 0x8f1bbcdc'b0e1d9a3ULL;
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
};

} // namespace hetmac
