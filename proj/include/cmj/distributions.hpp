#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmj/rng.hpp"
#include "cmj/stats.hpp"

namespace cmj {

// ---------------------------------------------------------------------------
// Small numeric helpers.
// ---------------------------------------------------------------------------

// Exponential integral E1(x) for x >= 1, via the standard continued fraction
// (modified Lentz). Relative accuracy ~1e-15 in this range.
inline double exp_integral_e1(double x) {
  if (!(x >= 1.0)) throw std::invalid_argument("exp_integral_e1: needs x >= 1");
  double b = x + 1.0;
  double c = 1.0 / 1e-308;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 300; ++i) {
    const double a = -static_cast<double>(i) * static_cast<double>(i);
    b += 2.0;
    d = 1.0 / (a * d + b);
    c = b + a / c;
    const double del = c * d;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x);
}

// (1 - e^{-x}) / x, stable near zero.
inline double phi1(double x) {
  if (x == 0.0) return 1.0;
  return -std::expm1(-x) / x;
}

// (1 - (1+x) e^{-x}) / x^2, stable near zero.
inline double phi2(double x) {
  if (std::abs(x) < 1e-4) {
    return 0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0;
  }
  return (-std::expm1(-x) - x * std::exp(-x)) / (x * x);
}

// ---------------------------------------------------------------------------
// Age distributions (birth ages / lifespans). Support is (0, inf); every kind
// has a closed-form Laplace transform and an exact exponentially tilted
// sampler.
// ---------------------------------------------------------------------------

enum class AgeKind { deterministic, exponential, gamma, uniform };

class AgeDistribution {
 public:
  static AgeDistribution deterministic(double d) {
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw std::invalid_argument("age deterministic: value must be in (0, inf)");
    }
    return AgeDistribution(AgeKind::deterministic, d, 0.0);
  }
  static AgeDistribution exponential(double rate) {
    if (!(rate > 0.0) || !std::isfinite(rate)) {
      throw std::invalid_argument("age exponential: rate must be positive");
    }
    return AgeDistribution(AgeKind::exponential, rate, 0.0);
  }
  static AgeDistribution gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) ||
        !std::isfinite(rate)) {
      throw std::invalid_argument("age gamma: shape and rate must be positive");
    }
    return AgeDistribution(AgeKind::gamma, shape, rate);
  }
  static AgeDistribution uniform(double a, double b) {
    if (!(0.0 <= a) || !(a < b) || !std::isfinite(b)) {
      throw std::invalid_argument("age uniform: need 0 <= a < b < inf");
    }
    return AgeDistribution(AgeKind::uniform, a, b);
  }

  AgeKind kind() const { return kind_; }
  double param1() const { return p1_; }
  double param2() const { return p2_; }

  double mean() const {
    switch (kind_) {
      case AgeKind::deterministic: return p1_;
      case AgeKind::exponential: return 1.0 / p1_;
      case AgeKind::gamma: return p1_ / p2_;
      case AgeKind::uniform: return 0.5 * (p1_ + p2_);
    }
    return 0.0;
  }

  // E[e^{-theta T}]; exactly 1 at theta = 0.
  double laplace(double theta) const {
    if (!(theta >= 0.0)) throw std::invalid_argument("laplace: theta must be >= 0");
    if (theta == 0.0) return 1.0;
    switch (kind_) {
      case AgeKind::deterministic:
        return std::exp(-theta * p1_);
      case AgeKind::exponential:
        return p1_ / (p1_ + theta);
      case AgeKind::gamma:
        return std::pow(p2_ / (p2_ + theta), p1_);
      case AgeKind::uniform: {
        const double x = theta * (p2_ - p1_);
        return std::exp(-theta * p1_) * phi1(x);
      }
    }
    return 0.0;
  }

  // E[T e^{-theta T}] = -d/dtheta of laplace; exactly the mean at theta = 0.
  double laplace_neg_derivative(double theta) const {
    if (!(theta >= 0.0)) {
      throw std::invalid_argument("laplace derivative: theta must be >= 0");
    }
    if (theta == 0.0) return mean();
    switch (kind_) {
      case AgeKind::deterministic:
        return p1_ * std::exp(-theta * p1_);
      case AgeKind::exponential:
        return p1_ / ((p1_ + theta) * (p1_ + theta));
      case AgeKind::gamma:
        return (p1_ / (p2_ + theta)) * std::pow(p2_ / (p2_ + theta), p1_);
      case AgeKind::uniform: {
        const double w = p2_ - p1_;
        const double x = theta * w;
        return std::exp(-theta * p1_) * (p1_ * phi1(x) + w * phi2(x));
      }
    }
    return 0.0;
  }

  double sample(Rng& rng) const {
    switch (kind_) {
      case AgeKind::deterministic: return p1_;
      case AgeKind::exponential: return rng.exponential(p1_);
      case AgeKind::gamma: return rng.gamma(p1_, p2_);
      case AgeKind::uniform: return p1_ + (p2_ - p1_) * rng.uniform01();
    }
    return 0.0;
  }

  // Sample from the density e^{-alpha t} dF(t) / L(alpha).
  double sample_tilted(double alpha, Rng& rng) const {
    if (!(alpha > 0.0)) throw std::invalid_argument("tilted sample: alpha must be > 0");
    switch (kind_) {
      case AgeKind::deterministic:
        return p1_;  // an atom is tilt-invariant
      case AgeKind::exponential:
        return rng.exponential(p1_ + alpha);
      case AgeKind::gamma:
        return rng.gamma(p1_, p2_ + alpha);
      case AgeKind::uniform: {
        // Truncated exponential on [a, b]:
        // t = a - log(1 - u (1 - e^{-alpha (b-a)})) / alpha.
        const double u = rng.uniform01();
        const double r = -std::expm1(-alpha * (p2_ - p1_));
        return p1_ - std::log1p(-u * r) / alpha;
      }
    }
    return 0.0;
  }

  friend bool operator==(const AgeDistribution& x, const AgeDistribution& y) {
    return x.kind_ == y.kind_ && x.p1_ == y.p1_ && x.p2_ == y.p2_;
  }

 private:
  AgeDistribution(AgeKind kind, double p1, double p2)
      : kind_(kind), p1_(p1), p2_(p2) {}

  AgeKind kind_;
  double p1_;
  double p2_;
};

// ---------------------------------------------------------------------------
// Heavy-tailed count law internals: p_k proportional to 1/(k^2 ln^2 k) for
// k >= 2, mixed with an atom. The mean is finite while E[N log N] diverges.
// Tail sums are evaluated by partial summation plus Euler-Maclaurin
// corrections whose integrals reduce to 1/ln(A) and the exponential integral.
// ---------------------------------------------------------------------------

namespace heavy_detail {

inline double f1(double x) {  // 1 / (x ln^2 x)
  const double L = std::log(x);
  return 1.0 / (x * L * L);
}
inline double f1_prime(double x) {
  const double L = std::log(x);
  return -(L + 2.0) / (x * x * L * L * L);
}
inline double f2(double x) {  // 1 / (x^2 ln^2 x)
  const double L = std::log(x);
  return 1.0 / (x * x * L * L);
}
inline double f2_prime(double x) {
  const double L = std::log(x);
  return -2.0 * (L + 1.0) / (x * x * x * L * L * L);
}

// sum_{k >= a} 1/(k ln^2 k); integral term is exactly 1/ln(a).
inline double tail_sum_f1(double a) {
  return 1.0 / std::log(a) + 0.5 * f1(a) - f1_prime(a) / 12.0;
}

// sum_{k >= a} 1/(k^2 ln^2 k); integral term is int_{ln a}^inf e^-u/u^2 du.
inline double tail_sum_f2(double a) {
  const double L = std::log(a);
  const double g2 = std::exp(-L) / L - exp_integral_e1(L);
  return g2 + 0.5 * f2(a) - f2_prime(a) / 12.0;
}

// 5-point Gauss-Legendre integral of f over [k - 1/2, k + 1/2].
template <typename F>
double cell_integral(F f, double k) {
  static constexpr std::array<double, 5> kNodes = {
      -0.9061798459386640, -0.5384693101056831, 0.0,
      0.5384693101056831, 0.9061798459386640};
  static constexpr std::array<double, 5> kWeights = {
      0.23692688505618909, 0.47862867049936647, 0.5688888888888889,
      0.47862867049936647, 0.23692688505618909};
  double s = 0.0;
  for (int i = 0; i < 5; ++i) s += kWeights[i] * f(k + 0.5 * kNodes[i]);
  return 0.5 * s;
}

struct Tables {
  double atom = 0.0;
  double atom_weight = 0.0;
  double norm_sum = 0.0;  // S0 = sum_{k>=2} f2(k)
  double mean_sum = 0.0;  // S1 = sum_{k>=2} f1(k)
  double mean = 0.0;
  // Conditional CDF of the tail component (k = 2 .. kTableTop), ordinary and
  // size-biased. The remaining mass beyond the table is handled analytically.
  std::vector<double> tail_cdf;
  std::vector<double> sb_tail_cdf;
  double tail_beyond_table = 0.0;     // P(K > top | tail component)
  double sb_tail_beyond_table = 0.0;  // same for the size-biased tail

  static constexpr std::int64_t kTableTop = 1 << 16;
  static constexpr std::int64_t kSumTop = 1 << 18;

  Tables(std::int64_t atom_value, double w) {
    atom = static_cast<double>(atom_value);
    atom_weight = w;
    KahanSum s0, s1;
    for (std::int64_t k = 2; k <= kSumTop; ++k) {
      const double kd = static_cast<double>(k);
      s0.add(f2(kd));
      s1.add(f1(kd));
    }
    norm_sum = s0.value() + tail_sum_f2(static_cast<double>(kSumTop + 1));
    mean_sum = s1.value() + tail_sum_f1(static_cast<double>(kSumTop + 1));
    mean = w * atom + (1.0 - w) * mean_sum / norm_sum;

    tail_cdf.resize(kTableTop - 1);
    sb_tail_cdf.resize(kTableTop - 1);
    KahanSum c0, c1;
    for (std::int64_t k = 2; k <= kTableTop; ++k) {
      const double kd = static_cast<double>(k);
      c0.add(f2(kd) / norm_sum);
      c1.add(f1(kd) / mean_sum);
      tail_cdf[k - 2] = c0.value();
      sb_tail_cdf[k - 2] = c1.value();
    }
    const double top = static_cast<double>(kTableTop + 1);
    tail_beyond_table = tail_sum_f2(top) / norm_sum;
    sb_tail_beyond_table = tail_sum_f1(top) / mean_sum;
    tail_cdf.back() = 1.0 - tail_beyond_table;
    sb_tail_cdf.back() = 1.0 - sb_tail_beyond_table;
  }

  // Sample k > kTableTop with P(k) proportional to f1(k). Continuous
  // inversion of the exact tail integral, then a midpoint-vs-cell rejection
  // (f1 is convex, so the acceptance ratio is <= 1).
  double sample_sb_beyond(Rng& rng) const {
    const double a0 = static_cast<double>(kTableTop) + 0.5;
    const double log_a0 = std::log(a0);
    for (;;) {
      const double v = rng.uniform01();
      const double log_x = log_a0 / (1.0 - v);
      if (log_x > 700.0) return 1e304;  // beyond double range; see docs
      const double x = std::exp(log_x);
      const double k = std::floor(x + 0.5);
      if (k > 0x1p52) return k;  // pmf granularity below double resolution
      const double mk = cell_integral(f1, k);
      if (rng.uniform01() * mk <= f1(k)) return k;
    }
  }

  // Sample k > kTableTop with P(k) proportional to f2(k). Pareto envelope
  // x ~ a0/x^2 with acceptance (ln a0 / ln x)^2, then the same cell rejection.
  double sample_ordinary_beyond(Rng& rng) const {
    const double a0 = static_cast<double>(kTableTop) + 0.5;
    const double log_a0 = std::log(a0);
    for (;;) {
      const double x = a0 / rng.uniform_pos();
      if (!std::isfinite(x)) continue;
      const double lr = log_a0 / std::log(x);
      if (rng.uniform01() > lr * lr) continue;
      const double k = std::floor(x + 0.5);
      if (k > 0x1p52) return k;
      const double mk = cell_integral(f2, k);
      if (rng.uniform01() * mk <= f2(k)) return k;
    }
  }
};

}  // namespace heavy_detail

// ---------------------------------------------------------------------------
// Count distributions (offspring numbers per channel).
//
// Counts are carried as integer-valued doubles: the heavy-tailed law's
// size-biased version has a log-Cauchy-like tail, so realized counts can
// exceed any integer type's range.
// ---------------------------------------------------------------------------

enum class CountKind { deterministic, poisson, geometric, table, heavy_tail };

class CountDistribution {
 public:
  static CountDistribution deterministic(std::int64_t n) {
    if (n < 0) throw std::invalid_argument("count deterministic: n must be >= 0");
    CountDistribution c(CountKind::deterministic);
    c.p1_ = static_cast<double>(n);
    return c;
  }
  static CountDistribution poisson(double mean) {
    if (!(mean > 0.0) || !std::isfinite(mean)) {
      throw std::invalid_argument("count poisson: mean must be positive");
    }
    CountDistribution c(CountKind::poisson);
    c.p1_ = mean;
    return c;
  }
  static CountDistribution geometric(double success_prob) {
    if (!(success_prob > 0.0) || !(success_prob <= 1.0)) {
      throw std::invalid_argument("count geometric: success prob must be in (0, 1]");
    }
    CountDistribution c(CountKind::geometric);
    c.p1_ = success_prob;
    return c;
  }
  static CountDistribution table(std::vector<double> pmf) {
    if (pmf.empty()) throw std::invalid_argument("count table: empty pmf");
    KahanSum sum;
    for (double p : pmf) {
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw std::invalid_argument("count table: pmf entries must be in [0, 1]");
      }
      sum.add(p);
    }
    if (std::abs(sum.value() - 1.0) > 1e-12) {
      throw std::invalid_argument("count table: pmf sums to " +
                                  std::to_string(sum.value()) + ", not 1");
    }
    CountDistribution c(CountKind::table);
    c.table_.reserve(pmf.size());
    for (double p : pmf) c.table_.push_back(p / sum.value());
    return c;
  }
  static CountDistribution heavy_tail(std::int64_t atom, double atom_weight) {
    if (atom < 0) throw std::invalid_argument("count heavy_tail: atom must be >= 0");
    if (!(atom_weight >= 0.0) || !(atom_weight < 1.0)) {
      throw std::invalid_argument("count heavy_tail: atom weight must be in [0, 1)");
    }
    CountDistribution c(CountKind::heavy_tail);
    c.p1_ = static_cast<double>(atom);
    c.p2_ = atom_weight;
    c.heavy_ = std::make_shared<const heavy_detail::Tables>(atom, atom_weight);
    return c;
  }

  CountKind kind() const { return kind_; }
  double param1() const { return p1_; }
  double param2() const { return p2_; }
  const std::vector<double>& table_pmf() const { return table_; }

  double mean() const {
    switch (kind_) {
      case CountKind::deterministic: return p1_;
      case CountKind::poisson: return p1_;
      case CountKind::geometric: return (1.0 - p1_) / p1_;
      case CountKind::table: {
        double m = 0.0;
        for (std::size_t k = 0; k < table_.size(); ++k) {
          m += static_cast<double>(k) * table_[k];
        }
        return m;
      }
      case CountKind::heavy_tail: return heavy_->mean;
    }
    return 0.0;
  }

  double pmf(double k) const {
    if (k < 0.0 || k != std::floor(k)) return 0.0;
    switch (kind_) {
      case CountKind::deterministic:
        return k == p1_ ? 1.0 : 0.0;
      case CountKind::poisson: {
        // e^-m m^k / k! via logs for robustness at large k.
        return std::exp(-p1_ + k * std::log(p1_) - std::lgamma(k + 1.0));
      }
      case CountKind::geometric:
        return p1_ * std::pow(1.0 - p1_, k);
      case CountKind::table: {
        const auto i = static_cast<std::size_t>(k);
        return i < table_.size() ? table_[i] : 0.0;
      }
      case CountKind::heavy_tail: {
        double p = 0.0;
        if (k == heavy_->atom) p += heavy_->atom_weight;
        if (k >= 2.0) {
          p += (1.0 - heavy_->atom_weight) * heavy_detail::f2(k) / heavy_->norm_sum;
        }
        return p;
      }
    }
    return 0.0;
  }

  double size_biased_pmf(double k) const {
    const double m = mean();
    if (m <= 0.0) throw std::domain_error("size_biased_pmf: law has mean zero");
    return k * pmf(k) / m;
  }

  // Whether E[N log N] is finite. For the heavy-tailed kind the tail
  // exponents give sum 1/(k ln k) = inf, so the answer is analytic.
  bool xlogx_finite() const { return kind_ != CountKind::heavy_tail; }

  double sample(Rng& rng) const {
    switch (kind_) {
      case CountKind::deterministic:
        return p1_;
      case CountKind::poisson:
        return static_cast<double>(rng.poisson(p1_));
      case CountKind::geometric: {
        double u = rng.uniform01();
        double pk = p1_;
        double k = 0.0;
        while (u >= pk && k < 1e9) {
          u -= pk;
          pk *= 1.0 - p1_;
          k += 1.0;
        }
        return k;
      }
      case CountKind::table: {
        double u = rng.uniform01();
        for (std::size_t i = 0; i + 1 < table_.size(); ++i) {
          if (u < table_[i]) return static_cast<double>(i);
          u -= table_[i];
        }
        return static_cast<double>(table_.size() - 1);
      }
      case CountKind::heavy_tail: {
        if (rng.uniform01() < heavy_->atom_weight) return heavy_->atom;
        const double v = rng.uniform01();
        const auto& cdf = heavy_->tail_cdf;
        if (v >= cdf.back()) return heavy_->sample_ordinary_beyond(rng);
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), v);
        return static_cast<double>(2 + (it - cdf.begin()));
      }
    }
    return 0.0;
  }

  // Sample from p~_k = k p_k / m. Exact per kind: a constant stays itself,
  // Poisson becomes 1 + Poisson, table/geometric use precomputed tables and
  // the heavy tail combines a table with analytic tail inversion.
  double sample_size_biased(Rng& rng) const {
    const double m = mean();
    if (m <= 0.0) throw std::domain_error("sample_size_biased: law has mean zero");
    switch (kind_) {
      case CountKind::deterministic:
        return p1_;
      case CountKind::poisson:
        return 1.0 + static_cast<double>(rng.poisson(p1_));
      case CountKind::geometric:
      case CountKind::table: {
        // Inverse CDF walk over k p_k / m; the geometric tail is light, so
        // the walk terminates quickly with probability 1 - 1e-13 per draw.
        double u = rng.uniform01();
        double k = 1.0;
        for (;;) {
          const double w = k * pmf(k) / m;
          if (u < w) return k;
          u -= w;
          k += 1.0;
          if (kind_ == CountKind::table && k >= static_cast<double>(table_.size())) {
            return static_cast<double>(table_.size() - 1);
          }
          if (k > 1e9) return k;
        }
      }
      case CountKind::heavy_tail: {
        const double atom_mass = heavy_->atom_weight * heavy_->atom / m;
        if (rng.uniform01() < atom_mass) return heavy_->atom;
        const double v = rng.uniform01();
        const auto& cdf = heavy_->sb_tail_cdf;
        if (v >= cdf.back()) return heavy_->sample_sb_beyond(rng);
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), v);
        return static_cast<double>(2 + (it - cdf.begin()));
      }
    }
    return 0.0;
  }

  // Largest support point, +inf for unbounded kinds.
  double max_support() const {
    switch (kind_) {
      case CountKind::deterministic: return p1_;
      case CountKind::table: return static_cast<double>(table_.size() - 1);
      default: return std::numeric_limits<double>::infinity();
    }
  }

  // Accessors used by tests for the frozen tail constants.
  double heavy_norm_sum() const { return heavy_->norm_sum; }
  double heavy_mean_sum() const { return heavy_->mean_sum; }

  friend bool operator==(const CountDistribution& x, const CountDistribution& y) {
    return x.kind_ == y.kind_ && x.p1_ == y.p1_ && x.p2_ == y.p2_ &&
           x.table_ == y.table_;
  }

 private:
  explicit CountDistribution(CountKind kind) : kind_(kind) {}

  CountKind kind_;
  double p1_ = 0.0;
  double p2_ = 0.0;
  std::vector<double> table_;
  std::shared_ptr<const heavy_detail::Tables> heavy_;
};

}  // namespace cmj
