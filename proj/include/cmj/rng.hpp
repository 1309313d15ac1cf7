#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace cmj {

// SplitMix64 finalizer. Used to derive independent substream seeds from a
// master seed, so replicate r always sees the same stream no matter how
// replicates are scheduled.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic random stream with the handful of samplers the simulators
// need. All sampling goes through this class; nothing uses std::
// distributions, so a given (seed, call sequence) reproduces bit-identical
// values across builds.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  // Independent stream addressed by (purpose, index), e.g. (tag, replicate).
  Rng substream(std::uint64_t purpose, std::uint64_t index = 0) const {
    std::uint64_t z = mix64(seed_ ^ mix64(purpose + 0x51ed270b0a9cfd5bULL));
    return Rng(mix64(z ^ mix64(index + 0x63652362cdf053a1ULL)));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1); safe as a log() argument.
  double uniform_pos() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t uniform_below(std::uint64_t n) {
    // Rejection to avoid modulo bias.
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

  double normal() {
    // Marsaglia polar method; the second variate is discarded to keep the
    // draw count per call fixed at "until acceptance".
    for (;;) {
      const double u = 2.0 * uniform_pos() - 1.0;
      const double v = 2.0 * uniform_pos() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) {
        return u * std::sqrt(-2.0 * std::log(s) / s);
      }
    }
  }

  // Marsaglia-Tsang for shape >= 1, boosted for shape < 1.
  double gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0)) {
      throw std::invalid_argument("gamma: shape and rate must be positive");
    }
    if (shape < 1.0) {
      const double u = uniform_pos();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      const double v = t * t * t;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
        return d * v / rate;
      }
    }
  }

  std::int64_t poisson(double mean) {
    if (mean < 0.0) throw std::invalid_argument("poisson: negative mean");
    std::int64_t total = 0;
    // Exact split: Poisson(m) = Poisson(30) + Poisson(m - 30).
    while (mean > 30.0) {
      total += poisson_small(30.0);
      mean -= 30.0;
    }
    return total + poisson_small(mean);
  }

 private:
  std::int64_t poisson_small(double mean) {
    const double limit = std::exp(-mean);
    std::int64_t k = 0;
    double prod = uniform_pos();
    while (prod > limit) {
      ++k;
      prod *= uniform_pos();
    }
    return k;
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace cmj
