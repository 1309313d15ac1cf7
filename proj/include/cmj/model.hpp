#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmj/distributions.hpp"
#include "cmj/rng.hpp"

namespace cmj {

using TypeId = int;

struct TypeSpace {
  std::vector<std::string> labels;

  int size() const { return static_cast<int>(labels.size()); }

  TypeId index_of(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == label) return static_cast<TypeId>(i);
    }
    return -1;
  }
};

// One reproduction channel: a count law plus i.i.d. ages, all children of a
// fixed type. With shared_age, a single age draw is used for every child of
// the channel (binary fission/splitting models).
struct ReproChannel {
  TypeId parent = -1;
  TypeId child = -1;
  CountDistribution count;
  AgeDistribution age;
  bool shared_age = false;
};

struct ModelSpec {
  std::string name;
  TypeSpace types;
  std::vector<ReproChannel> channels;
  std::vector<bool> absorbing;                             // per type
  std::vector<std::optional<AgeDistribution>> lifespan;    // per type

  int n_types() const { return types.size(); }
};

// One realized reproduction process: birth points sorted by age, plus an
// optional death age when the model has lifespans.
struct LifePoint {
  double age = 0.0;
  TypeId child = -1;
};

struct Life {
  std::vector<LifePoint> points;
  std::optional<double> death_age;
};

namespace detail {

// Floating-point gcd with relative tolerance; used for the lattice check.
inline double fgcd(double a, double b) {
  const double tol = 1e-9 * std::max(a, b);
  while (b > tol) {
    const double r = std::fmod(a, b);
    a = b;
    b = (r > tol && b - r > tol) ? r : 0.0;
  }
  return a;
}

}  // namespace detail

// A validated model: label references resolved, pmfs normalized, per-type
// channel lists and means precomputed, lattice flag set.
class ValidatedModel {
 public:
  explicit ValidatedModel(ModelSpec spec) : spec_(std::move(spec)) {
    const auto errors = check(spec_);
    if (!errors.empty()) {
      std::string msg = "invalid model '" + spec_.name + "':";
      for (const auto& e : errors) msg += "\n  - " + e;
      throw std::invalid_argument(msg);
    }
    const int n = spec_.n_types();
    if (spec_.absorbing.empty()) spec_.absorbing.assign(n, false);
    if (spec_.lifespan.empty()) spec_.lifespan.assign(n, std::nullopt);
    channels_of_.assign(n, {});
    for (std::size_t c = 0; c < spec_.channels.size(); ++c) {
      channels_of_[spec_.channels[c].parent].push_back(static_cast<int>(c));
    }
    channel_means_.reserve(spec_.channels.size());
    for (const auto& ch : spec_.channels) channel_means_.push_back(ch.count.mean());
    lattice_ = compute_lattice();
  }

  // All structural problems with a spec, as human-readable strings.
  static std::vector<std::string> check(const ModelSpec& spec) {
    std::vector<std::string> errors;
    const int n = spec.n_types();
    if (n < 1) errors.push_back("type space is empty");
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (spec.types.labels[i] == spec.types.labels[j]) {
          errors.push_back("duplicate type label '" + spec.types.labels[i] + "'");
        }
      }
      if (spec.types.labels[i].empty()) errors.push_back("empty type label");
    }
    if (!spec.absorbing.empty() &&
        spec.absorbing.size() != static_cast<std::size_t>(n)) {
      errors.push_back("absorbing flag list does not match the type count");
    }
    if (!spec.lifespan.empty() &&
        spec.lifespan.size() != static_cast<std::size_t>(n)) {
      errors.push_back("lifespan list does not match the type count");
    }
    std::vector<bool> has_channel(std::max(n, 1), false);
    for (const auto& ch : spec.channels) {
      if (ch.parent < 0 || ch.parent >= n) {
        errors.push_back("channel references unknown parent type");
        continue;
      }
      if (ch.child < 0 || ch.child >= n) {
        errors.push_back("channel references unknown child type");
        continue;
      }
      has_channel[ch.parent] = true;
    }
    for (int i = 0; i < n; ++i) {
      const bool absorbing =
          !spec.absorbing.empty() && spec.absorbing[static_cast<std::size_t>(i)];
      if (!has_channel[i] && !absorbing) {
        errors.push_back("type '" + spec.types.labels[i] +
                         "' has no channels and is not marked absorbing");
      }
      if (has_channel[i] && absorbing) {
        errors.push_back("type '" + spec.types.labels[i] +
                         "' is marked absorbing but has channels");
      }
    }
    return errors;
  }

  const ModelSpec& spec() const { return spec_; }
  const std::string& name() const { return spec_.name; }
  int n_types() const { return spec_.n_types(); }
  const std::vector<int>& channels_of(TypeId s) const {
    return channels_of_[static_cast<std::size_t>(s)];
  }
  const ReproChannel& channel(int c) const {
    return spec_.channels[static_cast<std::size_t>(c)];
  }
  int n_channels() const { return static_cast<int>(spec_.channels.size()); }
  double channel_mean(int c) const {
    return channel_means_[static_cast<std::size_t>(c)];
  }
  bool is_absorbing(TypeId s) const {
    return spec_.absorbing[static_cast<std::size_t>(s)];
  }
  const std::optional<AgeDistribution>& lifespan(TypeId s) const {
    return spec_.lifespan[static_cast<std::size_t>(s)];
  }
  bool has_all_lifespans() const {
    for (const auto& l : spec_.lifespan) {
      if (!l.has_value()) return false;
    }
    return !spec_.lifespan.empty();
  }

  // True when every birth-age law is a deterministic atom and the atoms are
  // commensurable, so all birth times live on a common lattice.
  bool lattice() const { return lattice_; }

 private:
  bool compute_lattice() const {
    double g = 0.0;
    for (const auto& ch : spec_.channels) {
      if (ch.age.kind() != AgeKind::deterministic) return false;
      g = g == 0.0 ? ch.age.param1() : detail::fgcd(g, ch.age.param1());
    }
    return g > 0.0;
  }

  ModelSpec spec_;
  std::vector<std::vector<int>> channels_of_;
  std::vector<double> channel_means_;
  bool lattice_ = false;
};

inline ValidatedModel validate_model(ModelSpec spec) {
  return ValidatedModel(std::move(spec));
}

// Draw a full life of a type-s individual: per channel a count, then ages
// (one shared draw for shared_age channels), merged and sorted by age.
// Absorbing types yield an empty point list.
inline Life sample_life(const ValidatedModel& model, TypeId s, Rng& rng) {
  Life life;
  for (int c : model.channels_of(s)) {
    const ReproChannel& ch = model.channel(c);
    const double count = ch.count.sample(rng);
    if (count > 1e7) {
      throw std::runtime_error(
          "sample_life: channel count " + std::to_string(count) +
          " exceeds the materialization limit");
    }
    const auto n = static_cast<std::int64_t>(count);
    if (n <= 0) continue;
    if (ch.shared_age) {
      const double a = ch.age.sample(rng);
      life.points.insert(life.points.end(), static_cast<std::size_t>(n),
                         LifePoint{a, ch.child});
    } else {
      for (std::int64_t i = 0; i < n; ++i) {
        life.points.push_back(LifePoint{ch.age.sample(rng), ch.child});
      }
    }
  }
  std::stable_sort(life.points.begin(), life.points.end(),
                   [](const LifePoint& x, const LifePoint& y) { return x.age < y.age; });
  if (const auto& span = model.lifespan(s)) {
    life.death_age = span->sample(rng);
  }
  return life;
}

// The discounted, reproductive-value-weighted offspring transform:
// sum_i e^{-alpha age_i} h(child_i). Zero for an empty life.
inline double xi_bar(const Life& life, double alpha, std::span<const double> h) {
  double s = 0.0;
  for (const auto& p : life.points) {
    s += std::exp(-alpha * p.age) * h[static_cast<std::size_t>(p.child)];
  }
  return s;
}

// Grid approximation of an interval-type model: parent x and child y range
// over [0,1], the kernel density k(x,y) gives the expected offspring density.
// Cell (i -> j) gets a Poisson count with mean k(x_i, y_j)/n (midpoint rule)
// and the common age law.
inline ModelSpec discretize_interval_model(
    const std::function<double(double, double)>& kernel_density,
    const AgeDistribution& age, int n, const std::string& name) {
  if (n < 1) throw std::invalid_argument("discretize: grid size must be >= 1");
  ModelSpec spec;
  spec.name = name;
  for (int i = 0; i < n; ++i) spec.types.labels.push_back("cell" + std::to_string(i));
  const double width = 1.0 / static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    const double x = (static_cast<double>(i) + 0.5) * width;
    for (int j = 0; j < n; ++j) {
      const double y = (static_cast<double>(j) + 0.5) * width;
      const double density = kernel_density(x, y);
      if (!std::isfinite(density) || density < 0.0) {
        throw std::invalid_argument(
            "discretize: kernel density must be finite and nonnegative");
      }
      const double mass = density * width;
      if (mass <= 0.0) continue;
      spec.channels.push_back(
          ReproChannel{i, j, CountDistribution::poisson(mass), age, false});
    }
  }
  return spec;
}

}  // namespace cmj
