#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace vmudiff {

/** splitmix64 finalizer; used to mix seeds into stream-specific seeds. */
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/** Derives an independent stream seed from (seed, tag). */
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed ^ mix64(tag));
}

/**
 * Deterministic RNG: mt19937_64 plus hand-rolled distributions.
 *
 * Uniform and normal draws avoid std:: distribution objects so the byte
 * stream is identical across standard-library implementations.
 */
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /** Uniform in [0, 1). */
  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /** Uniform in [lo, hi). */
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  /** Uniform integer in [lo, hi], inclusive. Rejection-free modulo is fine here. */
  long uniform_int(long lo, long hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<long>(eng_() % span);
  }

  /** Standard normal via Box-Muller; one fresh pair per call, no cached state. */
  double normal() {
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = unit();
    double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /** Child RNG with an independent stream for the given tag. */
  Rng fork(std::uint64_t tag) const { return Rng(derive_seed(state_seed_view(), tag)); }

private:
  std::mt19937_64 eng_;

  // fork() must not advance this generator; hash the engine output sequence
  // position instead is not accessible, so forks are derived from a copy.
  std::uint64_t state_seed_view() const {
    std::mt19937_64 copy = eng_;
    return copy();
  }
};

}  // namespace vmudiff
