#ifndef ETREE_RNG_HPP_
#define ETREE_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>

namespace etree {

// Seedable portable RNG. The raw stream is std::mt19937_64 (bit-exact across
// platforms per the standard); the real-valued mappings below are written out
// explicitly instead of using std::*_distribution, whose output is
// implementation-defined. Splits, initializations, and synthetic data all go
// through this class so runs reproduce everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), n >= 1. Rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller (one value per call; the pair's second
  // member is cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  // Unit-rate exponential, used for simplex sampling.
  double exponential() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return -std::log(u);
  }

 private:
  std::mt19937_64 gen_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// Derives an independent stream seed from a base seed and two indices
// (splitmix64-style finalizer). Used wherever one configured seed has to fan
// out into many decorrelated sub-seeds (folds, repeats, restarts).
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = base + 0x9e3779b97f4a7c15ULL * (a * 8191 + b + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace etree

#endif  // ETREE_RNG_HPP_
