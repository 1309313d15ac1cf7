#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmj/model.hpp"
#include "cmj/rng.hpp"
#include "cmj/stats.hpp"

namespace cmj {

// Dense square matrix, row-major. The type spaces here are tiny (fixtures
// have 1-2 types, grid models a few dozen), so no linear-algebra dependency
// is warranted.
struct Matrix {
  int n = 0;
  std::vector<double> a;

  explicit Matrix(int size = 0) : n(size), a(static_cast<std::size_t>(size) * size, 0.0) {}
  double& at(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
  double at(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }
};

// All analytic constants derived from a model: Malthusian parameter, Perron
// eigen-elements, mean spine inter-arrival, spine transition kernel.
//
// Norming convention: sum(pi) = 1 and sum(pi * h) = 1, which makes
// nu = pi * h a probability vector with no extra constant.
struct SpectralData {
  double alpha = 0.0;
  std::vector<double> pi;
  std::vector<double> h;
  double beta = 0.0;
  std::vector<double> nu;
  Matrix mhat;
  double sup_h = 0.0;
  Matrix spine_kernel;

  int n_types() const { return static_cast<int>(pi.size()); }
};

// Discounted reproduction kernel: entry (s, r) is
// sum over channels s->r of count mean * E[e^{-theta T}].
// Shared-age channels contribute identically (only the expectation enters).
inline Matrix kernel_matrix(const ValidatedModel& model, double theta) {
  if (!(theta >= 0.0)) throw std::invalid_argument("kernel_matrix: theta must be >= 0");
  Matrix m(model.n_types());
  for (int c = 0; c < model.n_channels(); ++c) {
    const ReproChannel& ch = model.channel(c);
    m.at(ch.parent, ch.child) += model.channel_mean(c) * ch.age.laplace(theta);
  }
  return m;
}

namespace detail {

struct PowerIterationResult {
  double radius = 0.0;
  std::vector<double> vec;
  bool converged = false;
};

// Power iteration for the Perron root/vector of a nonnegative matrix.
// transpose=true iterates the left vector. Reducible or periodic kernels do
// not converge and are reported as such.
inline PowerIterationResult power_iteration(const Matrix& m, bool transpose,
                                            std::span<const double> warm_start,
                                            int max_iter = 50000) {
  const int n = m.n;
  PowerIterationResult out;
  std::vector<double> v(static_cast<std::size_t>(n), 1.0 / n);
  if (static_cast<int>(warm_start.size()) == n) {
    v.assign(warm_start.begin(), warm_start.end());
  }
  std::vector<double> w(static_cast<std::size_t>(n), 0.0);
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    double norm = 0.0;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) {
        s += transpose ? m.at(j, i) * v[static_cast<std::size_t>(j)]
                       : m.at(i, j) * v[static_cast<std::size_t>(j)];
      }
      w[static_cast<std::size_t>(i)] = s;
      norm += s;
    }
    if (!(norm > 0.0)) {
      out.radius = 0.0;
      out.vec = v;
      out.converged = true;  // the zero matrix row case
      return out;
    }
    double change = 0.0;
    for (int i = 0; i < n; ++i) {
      const double next = w[static_cast<std::size_t>(i)] / norm;
      change += std::abs(next - v[static_cast<std::size_t>(i)]);
      v[static_cast<std::size_t>(i)] = next;
    }
    lambda = norm;
    if (change < 1e-15) {
      out.radius = lambda;
      out.vec = std::move(v);
      out.converged = true;
      return out;
    }
  }
  out.radius = lambda;
  out.vec = std::move(v);
  out.converged = false;
  return out;
}

inline double spectral_radius_with_warm(const Matrix& m, std::vector<double>& warm) {
  auto res = power_iteration(m, /*transpose=*/false, warm);
  if (!res.converged) {
    throw std::runtime_error(
        "power iteration did not converge; the kernel looks reducible or "
        "periodic, which the Malthusian assumptions exclude");
  }
  warm = res.vec;
  return res.radius;
}

}  // namespace detail

inline double spectral_radius(const Matrix& m) {
  std::vector<double> warm;
  return detail::spectral_radius_with_warm(m, warm);
}

// The Perron theory (and everything downstream of it) needs an irreducible
// kernel: the support graph must be strongly connected.
inline bool is_irreducible(const Matrix& m) {
  const int n = m.n;
  if (n == 0) return false;
  auto reaches_all = [&](bool transpose) {
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::vector<int> stack = {0};
    seen[0] = true;
    int count = 1;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      for (int j = 0; j < n; ++j) {
        const double w = transpose ? m.at(j, i) : m.at(i, j);
        if (w > 0.0 && !seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = true;
          ++count;
          stack.push_back(j);
        }
      }
    }
    return count == n;
  };
  return reaches_all(false) && reaches_all(true);
}

// The Malthusian parameter: the unique theta > 0 with Perron root 1 of the
// discounted kernel. The radius is strictly decreasing in theta, so a
// doubling bracket plus bisection is unconditionally safe; a final Newton
// polish (using the eigenvector derivative formula) brings the root to the
// last representable digit.
inline double malthusian(const ValidatedModel& model) {
  std::vector<double> warm;
  auto radius_at = [&](double theta) {
    return detail::spectral_radius_with_warm(kernel_matrix(model, theta), warm);
  };
  if (!is_irreducible(kernel_matrix(model, 0.0))) {
    throw std::domain_error("model '" + model.name() +
                            "' has a reducible reproduction kernel");
  }
  const double at_zero = radius_at(0.0);
  if (!(at_zero > 1.0)) {
    throw std::domain_error("model '" + model.name() +
                            "' is not supercritical: kernel radius at 0 is " +
                            std::to_string(at_zero));
  }
  double lo = 0.0, hi = 1.0;
  int doublings = 0;
  while (radius_at(hi) >= 1.0) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 200) {
      throw std::runtime_error("malthusian: bracket did not close");
    }
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (radius_at(mid) >= 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }

  // Derivative of the Perron root: rho'(theta) = x' M'(theta) y / (x' y)
  // with left/right Perron vectors x, y and M' entrywise
  // -sum_c m_c E[T e^{-theta T}].
  auto radius_derivative = [&](double theta) {
    const Matrix m = kernel_matrix(model, theta);
    auto right = detail::power_iteration(m, false, {});
    auto left = detail::power_iteration(m, true, {});
    double num = 0.0, den = 0.0;
    Matrix dm(model.n_types());
    for (int c = 0; c < model.n_channels(); ++c) {
      const ReproChannel& ch = model.channel(c);
      dm.at(ch.parent, ch.child) -=
          model.channel_mean(c) * ch.age.laplace_neg_derivative(theta);
    }
    for (int i = 0; i < m.n; ++i) {
      den += left.vec[static_cast<std::size_t>(i)] * right.vec[static_cast<std::size_t>(i)];
      for (int j = 0; j < m.n; ++j) {
        num += left.vec[static_cast<std::size_t>(i)] * dm.at(i, j) *
               right.vec[static_cast<std::size_t>(j)];
      }
    }
    return num / den;
  };

  double theta = 0.5 * (lo + hi);
  double f = radius_at(theta) - 1.0;
  const double slope = radius_derivative(theta);
  for (int it = 0; it < 60 && f != 0.0; ++it) {
    const double next = theta - f / slope;
    if (!(next > 0.0) || next == theta) break;
    const double fn = radius_at(next) - 1.0;
    if (std::abs(fn) >= std::abs(f)) break;
    theta = next;
    f = fn;
  }
  // Settle on the representable value with the smallest residual.
  double best = theta, best_abs = std::abs(f);
  for (double cand : {std::nextafter(theta, 0.0),
                      std::nextafter(theta, std::numeric_limits<double>::infinity())}) {
    const double fc = std::abs(radius_at(cand) - 1.0);
    if (fc < best_abs || (fc == best_abs && cand < best)) {
      best = cand;
      best_abs = fc;
    }
  }
  return best;
}

// Left/right Perron vectors of mhat(alpha), normalized so that sum(pi) = 1
// and sum(pi h) = 1.
inline void eigen_elements(const ValidatedModel& model, double alpha,
                           std::vector<double>& pi, std::vector<double>& h) {
  const Matrix m = kernel_matrix(model, alpha);
  auto left = detail::power_iteration(m, /*transpose=*/true, {});
  auto right = detail::power_iteration(m, /*transpose=*/false, {});
  if (!left.converged || !right.converged) {
    throw std::runtime_error(
        "eigen_elements: power iteration did not converge (reducible or "
        "periodic kernel)");
  }
  pi = std::move(left.vec);
  h = std::move(right.vec);
  double pi_sum = 0.0;
  for (double p : pi) pi_sum += p;
  for (double& p : pi) p /= pi_sum;
  double cross = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) cross += pi[i] * h[i];
  if (!(cross > 0.0)) throw std::runtime_error("eigen_elements: degenerate eigenvectors");
  for (double& x : h) x /= cross;
}

// Mean age at child-bearing under the stable backward weighting:
// beta = sum_{s,r} pi(s) h(r) sum_{c: s->r} m_c E[T e^{-alpha T}].
inline double beta_constant(const ValidatedModel& model, double alpha,
                            std::span<const double> pi, std::span<const double> h) {
  double b = 0.0;
  for (int c = 0; c < model.n_channels(); ++c) {
    const ReproChannel& ch = model.channel(c);
    b += pi[static_cast<std::size_t>(ch.parent)] * h[static_cast<std::size_t>(ch.child)] *
         model.channel_mean(c) * ch.age.laplace_neg_derivative(alpha);
  }
  return b;
}

// Spine type-chain transition matrix: entry (s, r) = h(r) mhat(s, r) / h(s).
// Rows sum to 1 because mhat h = h.
inline Matrix spine_transition_matrix(const SpectralData& sd) {
  Matrix k(sd.mhat.n);
  for (int s = 0; s < k.n; ++s) {
    for (int r = 0; r < k.n; ++r) {
      k.at(s, r) = sd.h[static_cast<std::size_t>(r)] * sd.mhat.at(s, r) /
                   sd.h[static_cast<std::size_t>(s)];
    }
  }
  return k;
}

// nu(s) = pi(s) h(s); a probability vector under the norming convention and
// the stationary law of the spine type chain.
inline std::vector<double> stationary_nu(const SpectralData& sd) {
  std::vector<double> nu(sd.pi.size());
  for (std::size_t i = 0; i < nu.size(); ++i) nu[i] = sd.pi[i] * sd.h[i];
  return nu;
}

inline SpectralData spectral_analyze(const ValidatedModel& model) {
  SpectralData sd;
  sd.alpha = malthusian(model);
  sd.mhat = kernel_matrix(model, sd.alpha);
  eigen_elements(model, sd.alpha, sd.pi, sd.h);
  sd.beta = beta_constant(model, sd.alpha, sd.pi, sd.h);
  sd.nu = stationary_nu(sd);
  sd.sup_h = *std::max_element(sd.h.begin(), sd.h.end());
  sd.spine_kernel = spine_transition_matrix(sd);
  return sd;
}

// ---------------------------------------------------------------------------
// x log x classification.
// ---------------------------------------------------------------------------

enum class XlogxVerdict { finite, divergent_likely, unknown };

inline std::string to_string(XlogxVerdict v) {
  switch (v) {
    case XlogxVerdict::finite: return "finite";
    case XlogxVerdict::divergent_likely: return "divergent-likely";
    case XlogxVerdict::unknown: return "unknown";
  }
  return "unknown";
}

struct XlogxReport {
  XlogxVerdict verdict = XlogxVerdict::unknown;
  std::array<double, 4> truncation_levels{10.0, 100.0, 1000.0, 10000.0};
  std::array<double, 4> truncated_means{};
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

// Draw xi_bar of an ordinary type-s life without materializing points.
// Channels with deterministic ages contribute count * e^{-alpha d} h exactly;
// random-age channels sum per-point terms (their counts are light-tailed in
// any model this simulator can analyze, so the loop is short; extremely large
// counts fall back to the law-of-large-numbers limit of the per-point sum).
inline double sample_xi_bar(const ValidatedModel& model, const SpectralData& sd,
                            TypeId s, Rng& rng) {
  double total = 0.0;
  for (int c : model.channels_of(s)) {
    const ReproChannel& ch = model.channel(c);
    const double n = ch.count.sample(rng);
    if (n <= 0.0) continue;
    const double hc = sd.h[static_cast<std::size_t>(ch.child)];
    if (ch.age.kind() == AgeKind::deterministic) {
      total += n * std::exp(-sd.alpha * ch.age.param1()) * hc;
    } else if (ch.shared_age) {
      total += n * std::exp(-sd.alpha * ch.age.sample(rng)) * hc;
    } else if (n > 1e7) {
      total += n * ch.age.laplace(sd.alpha) * hc;
    } else {
      for (double i = 0.0; i < n; i += 1.0) {
        total += std::exp(-sd.alpha * ch.age.sample(rng)) * hc;
      }
    }
  }
  return total;
}

inline TypeId sample_type(std::span<const double> weights, Rng& rng) {
  double u = rng.uniform01();
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    if (u < weights[i]) return static_cast<TypeId>(i);
    u -= weights[i];
  }
  return static_cast<TypeId>(weights.size() - 1);
}

// Classify E_pi[xi_bar log+ xi_bar]. The analytic branches are sufficient
// conditions only: Monte Carlo cannot prove divergence, hence the attached
// truncated-mean report and the three-valued verdict.
inline XlogxReport xlogx_classify(const ValidatedModel& model, const SpectralData& sd,
                                  std::size_t n_samples = 100000,
                                  std::uint64_t seed = 0) {
  XlogxReport report;
  bool any_infinite = false;
  bool witnessed_divergent = false;
  for (int c = 0; c < model.n_channels(); ++c) {
    const ReproChannel& ch = model.channel(c);
    if (!ch.count.xlogx_finite()) {
      any_infinite = true;
      if (ch.age.kind() == AgeKind::deterministic) witnessed_divergent = true;
    }
  }
  if (!any_infinite) {
    report.verdict = XlogxVerdict::finite;
  } else if (witnessed_divergent) {
    report.verdict = XlogxVerdict::divergent_likely;
  } else {
    report.verdict = XlogxVerdict::unknown;
  }

  report.n_samples = n_samples;
  report.seed = seed;
  Rng master(seed);
  std::array<KahanSum, 4> acc;
  for (std::size_t i = 0; i < n_samples; ++i) {
    Rng rng = master.substream(0x78c1, i);
    const TypeId s = sample_type(sd.pi, rng);
    const double xb = sample_xi_bar(model, sd, s, rng);
    const double y = xb > 1.0 ? xb * std::log(xb) : 0.0;
    for (int j = 0; j < 4; ++j) acc[static_cast<std::size_t>(j)].add(
        std::min(y, report.truncation_levels[static_cast<std::size_t>(j)]));
  }
  for (int j = 0; j < 4; ++j) {
    report.truncated_means[static_cast<std::size_t>(j)] =
        acc[static_cast<std::size_t>(j)].value() / static_cast<double>(n_samples);
  }
  return report;
}

}  // namespace cmj
