// Deterministic random stream.
//
// std::mt19937_64 is fully specified by the standard, but the standard
// distributions are not, so every draw here is hand-mapped from raw engine
// output. Identical seeds give identical sequences on every platform.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "a2dug/common.hpp"

namespace a2dug {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace detail

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(mix_seed(seed, stream)), engine_(seed_) {}

  // Stable child-stream derivation keyed on this stream's identity, so
  // children of distinct streams never collide. Independent of the parent's
  // current position, and each key yields a distinct child seed().
  RngStream derive(std::uint64_t key) const { return RngStream(seed_, key); }

  static std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    return detail::splitmix64(detail::splitmix64(seed) ^ stream);
  }

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n); rejection keeps it unbiased.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw ParamError("uniform_int: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via the Marsaglia polar method.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  // Knuth's product-of-uniforms sampler; adequate for small means.
  std::uint64_t poisson(double mean) {
    if (mean < 0.0) throw ParamError("poisson: mean must be nonnegative");
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  template <class V>
  void shuffle(V& v) {
    using std::swap;
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = std::size_t(uniform_int(i));
      swap(v[i - 1], v[j]);
    }
  }

  // The stream's mixed identity (not the raw constructor argument).
  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace a2dug
