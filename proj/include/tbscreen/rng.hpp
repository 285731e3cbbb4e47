#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

// Deterministic random-number utilities.
//
// All stochastic code in this library draws through these helpers rather than
// std::binomial_distribution and friends, whose algorithms are
// implementation-defined.  mt19937_64 output is pinned by the standard, and
// the samplers below are plain inversion, so identical seeds give identical
// streams on any conforming toolchain.

namespace tbs {

// SplitMix64 step; used to hash substream keys into well-mixed seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Collapses an arbitrary key tuple into one 64-bit seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0,
                              std::uint64_t c = 0, std::uint64_t d = 0) {
  std::uint64_t s = a;
  std::uint64_t h = splitmix64(s);
  s ^= b;
  h ^= splitmix64(s);
  s ^= c;
  h ^= splitmix64(s);
  s ^= d;
  h ^= splitmix64(s);
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1).  53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Binomial(n, p) by CDF inversion.  One uniform per draw keeps streams
  // aligned across runs that differ only in p, and inversion makes the draw
  // monotone in p for a fixed uniform.  Counts whose pmf(0) would underflow
  // are split into independent chunks small enough to stay representable.
  int binomial(int n, double p) {
    if (n < 0) throw std::invalid_argument("binomial: negative count");
    if (p <= 0.0 || n == 0) return 0;
    if (p >= 1.0) return n;
    const double log_q = std::log1p(-p);
    // pmf(0) = exp(n*log_q); keep the exponent comfortably above underflow.
    const int chunk_max = static_cast<int>(600.0 / -log_q) + 1;
    int total = 0;
    int remaining = n;
    while (remaining > 0) {
      const int m = remaining < chunk_max ? remaining : chunk_max;
      total += binomial_small_(m, p);
      remaining -= m;
    }
    return total;
  }

  // Poisson(rate) truncated at max: values above max collapse onto max.
  int truncated_poisson(double rate, int max) {
    if (rate < 0.0 || max < 0)
      throw std::invalid_argument("truncated_poisson: bad arguments");
    if (rate == 0.0) return 0;
    const double u = uniform();
    double pmf = std::exp(-rate);
    double cdf = pmf;
    int k = 0;
    while (k < max && u >= cdf) {
      ++k;
      pmf *= rate / k;
      cdf += pmf;
    }
    return k;
  }

  // Poisson(rate) by inversion; the tail beyond ~60 standard deviations is
  // clamped, far below any observable probability.
  int poisson(double rate) {
    if (rate < 0.0) throw std::invalid_argument("poisson: negative rate");
    if (rate == 0.0) return 0;
    const int cap = static_cast<int>(rate + 60.0 * std::sqrt(rate + 1.0) + 60.0);
    return truncated_poisson(rate, cap);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  int binomial_small_(int n, double p) {
    const double u = uniform();
    const double q = 1.0 - p;
    const double ratio = p / q;
    double pmf = std::pow(q, n);
    double cdf = pmf;
    int k = 0;
    while (k < n && u >= cdf) {
      pmf *= ratio * (n - k) / (k + 1);
      ++k;
      cdf += pmf;
    }
    return k;
  }

  std::mt19937_64 engine_;
};

}  // namespace tbs
