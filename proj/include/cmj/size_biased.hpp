#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cmj/model.hpp"
#include "cmj/rng.hpp"
#include "cmj/spectral.hpp"

namespace cmj {

// A life drawn from the size-biased law, together with the distinguished
// point (the child that continues the spine).
struct SizeBiasedLife {
  Life life;
  std::size_t distinguished = 0;
};

// Off-spine points of a spine individual's life, run-length compressed:
// points with a common (age, type) collapse into one group. Counts are
// doubles because size-biased heavy-tailed counts can be astronomically
// large.
struct SiblingGroup {
  double age = 0.0;
  TypeId type = -1;
  double count = 0.0;
};

// Exact sampler for the size-biased life law, derived from the channel
// decomposition of h(s) = sum_c m_c L_c(alpha) h(r_c):
//   1. pick channel c* with probability m_c L_c(alpha) h(r_c) / h(s),
//   2. draw c*'s count from its size-biased law, give one point (the
//      distinguished one) the alpha-tilted age and the rest ordinary ages,
//   3. leave every other channel at the ordinary law.
// The joint law of (life, distinguished point) is then the xi_bar-biased
// life with the point chosen proportionally to e^{-alpha age} h(type).
class SizeBiasedSampler {
 public:
  static constexpr double kMaterializeLimit = 1e7;

  SizeBiasedSampler(const ValidatedModel& model, const SpectralData& sd)
      : model_(model), sd_(sd) {
    const int n = model.n_types();
    channel_cdf_.resize(static_cast<std::size_t>(n));
    for (TypeId s = 0; s < n; ++s) {
      const auto& channels = model.channels_of(s);
      auto& cdf = channel_cdf_[static_cast<std::size_t>(s)];
      cdf.reserve(channels.size());
      double acc = 0.0;
      for (int c : channels) {
        const ReproChannel& ch = model.channel(c);
        acc += model.channel_mean(c) * ch.age.laplace(sd.alpha) *
               sd.h[static_cast<std::size_t>(ch.child)] /
               sd.h[static_cast<std::size_t>(s)];
        cdf.push_back(acc);
      }
    }
  }

  const ValidatedModel& model() const { return model_; }
  const SpectralData& spectral() const { return sd_; }

  int pick_channel(TypeId s, Rng& rng) const {
    const auto& channels = model_.channels_of(s);
    if (channels.empty()) {
      throw std::domain_error("size-biased sampling from a childless type");
    }
    const auto& cdf = channel_cdf_[static_cast<std::size_t>(s)];
    const double u = rng.uniform01();
    for (std::size_t i = 0; i + 1 < cdf.size(); ++i) {
      if (u < cdf[i]) return channels[i];
    }
    return channels.back();
  }

  // Fully materialized size-biased life. Guarded against counts too large to
  // hold in memory; the aggregate spine path below has no such limit for
  // deterministic-age channels.
  SizeBiasedLife sample(TypeId s, Rng& rng) const {
    const int star = pick_channel(s, rng);
    struct Tagged {
      LifePoint p;
      bool distinguished;
    };
    std::vector<Tagged> points;
    for (int c : model_.channels_of(s)) {
      const ReproChannel& ch = model_.channel(c);
      const double count = c == star ? ch.count.sample_size_biased(rng)
                                     : ch.count.sample(rng);
      if (count > kMaterializeLimit) {
        throw std::runtime_error(
            "size-biased life materialization limit exceeded; use the spine "
            "aggregation path for heavy-tailed counts");
      }
      const auto n = static_cast<std::int64_t>(count);
      if (n <= 0) continue;
      if (ch.shared_age) {
        const double a = c == star ? ch.age.sample_tilted(sd_.alpha, rng)
                                   : ch.age.sample(rng);
        const std::int64_t pick =
            c == star ? static_cast<std::int64_t>(
                            rng.uniform_below(static_cast<std::uint64_t>(n)))
                      : -1;
        for (std::int64_t i = 0; i < n; ++i) {
          points.push_back({LifePoint{a, ch.child}, i == pick});
        }
      } else {
        // Ages are i.i.d., so the distinguished slot can sit anywhere; a
        // uniform slot keeps the index uniform among tied deterministic ages.
        const std::int64_t pick =
            c == star ? static_cast<std::int64_t>(
                            rng.uniform_below(static_cast<std::uint64_t>(n)))
                      : -1;
        for (std::int64_t i = 0; i < n; ++i) {
          const bool dist = i == pick;
          const double a = dist ? ch.age.sample_tilted(sd_.alpha, rng)
                                : ch.age.sample(rng);
          points.push_back({LifePoint{a, ch.child}, dist});
        }
      }
    }
    std::stable_sort(points.begin(), points.end(),
                     [](const Tagged& x, const Tagged& y) { return x.p.age < y.p.age; });
    SizeBiasedLife out;
    out.life.points.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      out.life.points.push_back(points[i].p);
      if (points[i].distinguished) out.distinguished = i;
    }
    if (out.life.points.empty()) {
      throw std::logic_error("size-biased life came out empty");
    }
    if (const auto& span = model_.lifespan(s)) {
      out.life.death_age = span->sample(rng);
    }
    return out;
  }

  // One spine step in aggregate form: the distinguished child's (age, type),
  // xi_bar of the whole life, and the off-spine points as compressed groups.
  // Channels with deterministic ages never materialize, so heavy-tailed
  // counts cost O(1) here.
  struct SpineStep {
    double next_age = 0.0;
    TypeId next_type = -1;
    double xi_bar = 0.0;
    double sibling_weight = 0.0;  // sum of e^{-alpha age} h(type) off spine
    double life_points = 0.0;
    std::vector<SiblingGroup> siblings;
  };

  SpineStep sample_spine_step(TypeId s, Rng& rng) const {
    const int star = pick_channel(s, rng);
    SpineStep step;
    double sibling_sum = 0.0;
    double dist_weight = 0.0;
    for (int c : model_.channels_of(s)) {
      const ReproChannel& ch = model_.channel(c);
      const double hc = sd_.h[static_cast<std::size_t>(ch.child)];
      const double count = c == star ? ch.count.sample_size_biased(rng)
                                     : ch.count.sample(rng);
      if (count <= 0.0) continue;
      step.life_points += count;
      const bool det_age = ch.age.kind() == AgeKind::deterministic;
      if (ch.shared_age || det_age) {
        const double a = c == star ? ch.age.sample_tilted(sd_.alpha, rng)
                                   : (det_age ? ch.age.param1() : ch.age.sample(rng));
        const double w = std::exp(-sd_.alpha * a) * hc;
        const double off = c == star ? count - 1.0 : count;
        if (c == star) {
          step.next_age = a;
          step.next_type = ch.child;
          dist_weight = w;
        }
        if (off > 0.0) {
          sibling_sum += off * w;
          step.siblings.push_back({a, ch.child, off});
        }
      } else {
        if (count > kMaterializeLimit) {
          throw std::runtime_error(
              "spine step: a random-age channel drew a count beyond the "
              "materialization limit; heavy-tailed counts need deterministic "
              "ages on their channel");
        }
        const auto n = static_cast<std::int64_t>(count);
        std::int64_t first = 0;
        if (c == star) {
          const double a = ch.age.sample_tilted(sd_.alpha, rng);
          step.next_age = a;
          step.next_type = ch.child;
          dist_weight = std::exp(-sd_.alpha * a) * hc;
          first = 1;
        }
        for (std::int64_t i = first; i < n; ++i) {
          const double a = ch.age.sample(rng);
          const double w = std::exp(-sd_.alpha * a) * hc;
          sibling_sum += w;
          step.siblings.push_back({a, ch.child, 1.0});
        }
      }
    }
    if (step.next_type < 0) {
      throw std::logic_error("spine step produced no distinguished child");
    }
    step.sibling_weight = sibling_sum;
    step.xi_bar = dist_weight + sibling_sum;
    return step;
  }

 private:
  const ValidatedModel& model_;
  const SpectralData& sd_;
  std::vector<std::vector<double>> channel_cdf_;
};

// Rejection-sampling oracle for the same law: draw an ordinary life, accept
// with probability xi_bar / bound, then pick the distinguished point with
// probability e^{-alpha age_i} h(type_i) / xi_bar. Requires a caller-supplied
// essential-sup bound on xi_bar; aborts loudly if a life violates it.
inline SizeBiasedLife sample_size_biased_life_rejection(
    const ValidatedModel& model, const SpectralData& sd, TypeId s, double bound,
    Rng& rng) {
  if (!(bound > 0.0)) {
    throw std::invalid_argument("rejection sampler: bound must be positive");
  }
  for (;;) {
    Life life = sample_life(model, s, rng);
    const double xb = xi_bar(life, sd.alpha, sd.h);
    if (xb > bound) {
      throw std::domain_error(
          "rejection sampler: observed xi_bar " + std::to_string(xb) +
          " exceeds the supplied bound " + std::to_string(bound));
    }
    if (rng.uniform01() * bound >= xb) continue;
    double target = rng.uniform01() * xb;
    std::size_t pick = life.points.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < life.points.size(); ++i) {
      acc += std::exp(-sd.alpha * life.points[i].age) *
             sd.h[static_cast<std::size_t>(life.points[i].child)];
      if (target < acc) {
        pick = i;
        break;
      }
    }
    return SizeBiasedLife{std::move(life), pick};
  }
}

}  // namespace cmj
