#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmj/model.hpp"
#include "cmj/rng.hpp"
#include "cmj/size_biased.hpp"
#include "cmj/spectral.hpp"
#include "cmj/stats.hpp"

namespace cmj {

// ---------------------------------------------------------------------------
// Random characteristics. All built-ins vanish at negative ages, which is
// what lets the simulator evaluate them over processed individuals only.
// ---------------------------------------------------------------------------

enum class ChiKind { born, alive, type_count };

struct Characteristic {
  ChiKind kind = ChiKind::born;
  TypeId type = -1;

  static Characteristic born() { return {ChiKind::born, -1}; }
  static Characteristic alive() { return {ChiKind::alive, -1}; }
  static Characteristic type_count(TypeId r) { return {ChiKind::type_count, r}; }

  std::string label(const TypeSpace& types) const {
    switch (kind) {
      case ChiKind::born: return "born";
      case ChiKind::alive: return "alive";
      case ChiKind::type_count:
        return "type_count_" + types.labels[static_cast<std::size_t>(type)];
    }
    return "";
  }
};

enum class RootLaw { fixed, from_pi, from_nu };

struct RootChoice {
  RootLaw law = RootLaw::fixed;
  TypeId type = 0;

  static RootChoice fixed(TypeId s) { return {RootLaw::fixed, s}; }
  static RootChoice pi() { return {RootLaw::from_pi, -1}; }
  static RootChoice nu() { return {RootLaw::from_nu, -1}; }
};

struct SimCaps {
  std::int64_t max_births = 1000000;
  std::int64_t max_pending = 1000000;
};

// Time-indexed samples of one replicate. Entries are valid for the first
// n_valid sample times; a truncated run stops reporting at the cap hit.
struct Trajectory {
  std::vector<double> sample_times;
  std::vector<double> w;
  std::vector<std::vector<double>> z_chi;  // [characteristic][sample]
  std::vector<std::int64_t> born_count;
  std::vector<std::int64_t> pending_count;
  std::size_t n_valid = 0;
  bool extinct = false;
  bool truncated = false;
  double truncation_time = std::numeric_limits<double>::infinity();
  TypeId root_type = 0;
  std::uint64_t seed = 0;
};

// Full birth log for audit-grade runs (small populations only): every
// scheduled individual with its mother's processing sequence number.
struct AuditBirth {
  double time = 0.0;
  TypeId type = -1;
  double weight = 0.0;
  std::int64_t parent_seq = -1;  // -1 for the root
  std::int64_t rank = 0;
};

struct AuditLog {
  std::vector<AuditBirth> births;
  std::vector<double> processing_times;  // indexed by processing sequence
};

namespace detail {

struct PendingBirth {
  double time = 0.0;
  double weight = 0.0;  // e^{-alpha tau} h(type) / h(root), inherited multiplicatively
  TypeId type = -1;
  bool spine = false;
  std::int64_t parent_seq = -1;
  std::int64_t rank = 0;
};

// Min-heap order on (time, mother's processing sequence, child rank). The
// tie-break gives a deterministic processing order on lattice models where
// whole cohorts share a birth time.
struct LaterFirst {
  bool operator()(const PendingBirth& a, const PendingBirth& b) const {
    if (a.time != b.time) return a.time > b.time;
    if (a.parent_seq != b.parent_seq) return a.parent_seq > b.parent_seq;
    return a.rank > b.rank;
  }
};

// Event-driven population simulation shared by the ordinary and the
// size-biased measures. Under the size-biased measure the root starts on the
// spine: spine individuals draw size-biased lives whose distinguished child
// stays on the spine, everyone else reproduces under the ordinary law.
inline Trajectory simulate_population(const ValidatedModel& model,
                                      const SpectralData& sd,
                                      const SizeBiasedSampler* spine_sampler,
                                      RootChoice root, double horizon,
                                      SimCaps caps,
                                      const std::vector<Characteristic>& chis,
                                      const std::vector<double>& sample_times,
                                      Rng& rng, AuditLog* audit = nullptr) {
  if (caps.max_births <= 0 || caps.max_pending <= 0) {
    throw std::invalid_argument("simulate: caps must be positive");
  }
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (sample_times[i] > horizon) {
      throw std::invalid_argument("simulate: sample time beyond the horizon");
    }
    if (i > 0 && sample_times[i] < sample_times[i - 1]) {
      throw std::invalid_argument("simulate: sample times must be sorted");
    }
  }
  bool track_alive = false;
  for (const auto& chi : chis) {
    if (chi.kind == ChiKind::alive) {
      if (!model.has_all_lifespans()) {
        throw std::invalid_argument(
            "the 'alive' characteristic needs a lifespan law for every type");
      }
      track_alive = true;
    }
    if (chi.kind == ChiKind::type_count &&
        (chi.type < 0 || chi.type >= model.n_types())) {
      throw std::invalid_argument("type_count characteristic references an unknown type");
    }
  }
  if (sd.alpha * horizon > 600.0) {
    throw std::invalid_argument("simulate: alpha * horizon too large for weight arithmetic");
  }

  Trajectory traj;
  traj.sample_times = sample_times;
  traj.z_chi.assign(chis.size(), {});

  TypeId root_type = root.type;
  if (root.law == RootLaw::from_pi) root_type = sample_type(sd.pi, rng);
  if (root.law == RootLaw::from_nu) root_type = sample_type(sd.nu, rng);
  traj.root_type = root_type;

  std::vector<PendingBirth> heap;
  const LaterFirst order;
  std::int64_t scheduled = 0;
  std::int64_t processed = 0;
  std::vector<std::int64_t> type_counts(static_cast<std::size_t>(model.n_types()), 0);
  std::vector<double> death_heap;  // min-heap of death times
  std::int64_t deaths_passed = 0;

  auto schedule = [&](const PendingBirth& b) {
    if (scheduled + 1 > caps.max_births ||
        static_cast<std::int64_t>(heap.size()) + 1 > caps.max_pending) {
      return false;
    }
    ++scheduled;
    heap.push_back(b);
    std::push_heap(heap.begin(), heap.end(), order);
    if (audit != nullptr) {
      audit->births.push_back({b.time, b.type, b.weight, b.parent_seq, b.rank});
    }
    return true;
  };

  schedule({0.0, 1.0, root_type, spine_sampler != nullptr, -1, 0});

  // Processes the top birth; returns false when a cap was hit.
  auto process_next = [&]() {
    std::pop_heap(heap.begin(), heap.end(), order);
    const PendingBirth ind = heap.back();
    heap.pop_back();
    const std::int64_t seq = processed++;
    ++type_counts[static_cast<std::size_t>(ind.type)];
    if (audit != nullptr) audit->processing_times.push_back(ind.time);

    const double hs = sd.h[static_cast<std::size_t>(ind.type)];
    std::int64_t rank = 0;
    int star = -1;
    if (ind.spine) star = spine_sampler->pick_channel(ind.type, rng);
    for (int c : model.channels_of(ind.type)) {
      const ReproChannel& ch = model.channel(c);
      const bool starred = c == star;
      const double count = starred ? ch.count.sample_size_biased(rng)
                                   : ch.count.sample(rng);
      if (count <= 0.0) continue;
      const double hr = sd.h[static_cast<std::size_t>(ch.child)];
      double shared = 0.0;
      if (ch.shared_age) {
        shared = starred ? ch.age.sample_tilted(sd.alpha, rng) : ch.age.sample(rng);
      }
      // With a shared age every point of the channel carries the same
      // weight, so the first point can serve as the distinguished one.
      for (double i = 0.0; i < count; i += 1.0) {
        double a;
        if (ch.shared_age) {
          a = shared;
        } else if (starred && i == 0.0) {
          a = ch.age.sample_tilted(sd.alpha, rng);
        } else {
          a = ch.age.sample(rng);
        }
        PendingBirth child;
        child.time = ind.time + a;
        child.weight = ind.weight * std::exp(-sd.alpha * a) * (hr / hs);
        child.type = ch.child;
        child.spine = starred && i == 0.0;
        child.parent_seq = seq;
        child.rank = ++rank;
        if (!schedule(child)) {
          traj.truncated = true;
          traj.truncation_time = ind.time;
          return false;
        }
      }
    }
    if (const auto& span = model.lifespan(ind.type)) {
      const double death = ind.time + span->sample(rng);
      if (track_alive) {
        death_heap.push_back(death);
        std::push_heap(death_heap.begin(), death_heap.end(), std::greater<>());
      }
    }
    return true;
  };

  for (std::size_t si = 0; si < sample_times.size() && !traj.truncated; ++si) {
    const double t = sample_times[si];
    while (!heap.empty() && heap.front().time <= t) {
      if (!process_next()) break;
    }
    if (traj.truncated) break;
    if (heap.empty()) traj.extinct = true;

    KahanSum wsum;
    for (const auto& b : heap) wsum.add(b.weight);
    traj.w.push_back(wsum.value());
    traj.born_count.push_back(processed);
    traj.pending_count.push_back(static_cast<std::int64_t>(heap.size()));
    while (!death_heap.empty() && death_heap.front() <= t) {
      std::pop_heap(death_heap.begin(), death_heap.end(), std::greater<>());
      death_heap.pop_back();
      ++deaths_passed;
    }
    for (std::size_t ci = 0; ci < chis.size(); ++ci) {
      double z = 0.0;
      switch (chis[ci].kind) {
        case ChiKind::born:
          z = static_cast<double>(processed);
          break;
        case ChiKind::alive:
          z = static_cast<double>(processed - deaths_passed);
          break;
        case ChiKind::type_count:
          z = static_cast<double>(type_counts[static_cast<std::size_t>(chis[ci].type)]);
          break;
      }
      traj.z_chi[ci].push_back(z);
    }
    traj.n_valid = si + 1;
  }
  return traj;
}

}  // namespace detail

// Simulation of the ordinary population measure: chronological processing of
// births through a min-time queue. At a sample time t every birth up to t has
// been processed, so the pending set is exactly the coming generation and
// W(t) is its weight sum divided by the root's reproductive value.
inline Trajectory simulate_forward(const ValidatedModel& model, const SpectralData& sd,
                                   RootChoice root, double horizon, SimCaps caps,
                                   const std::vector<Characteristic>& chis,
                                   const std::vector<double>& sample_times, Rng rng,
                                   AuditLog* audit = nullptr) {
  if (root.law == RootLaw::from_nu) {
    throw std::invalid_argument("simulate_forward: root law must be fixed or pi");
  }
  return detail::simulate_population(model, sd, nullptr, root, horizon, caps, chis,
                                     sample_times, rng, audit);
}

// E_pi[chi_hat(alpha)] with chi_hat(alpha) = alpha int e^{-alpha a} chi(a) da.
// Under this convention the 'born' characteristic integrates to exactly one.
inline double chi_hat_mean(const Characteristic& chi, const ValidatedModel& model,
                           const SpectralData& sd) {
  switch (chi.kind) {
    case ChiKind::born:
      return 1.0;
    case ChiKind::alive: {
      if (!model.has_all_lifespans()) {
        throw std::invalid_argument(
            "chi_hat_mean: 'alive' needs a lifespan law for every type");
      }
      double v = 0.0;
      for (TypeId s = 0; s < model.n_types(); ++s) {
        v += sd.pi[static_cast<std::size_t>(s)] *
             (1.0 - model.lifespan(s)->laplace(sd.alpha));
      }
      return v;
    }
    case ChiKind::type_count:
      return sd.pi[static_cast<std::size_t>(chi.type)];
  }
  return 0.0;
}

struct NermanConstant {
  double value = 0.0;
  bool lattice_warning = false;
};

// The almost-sure limit constant of e^{-alpha t} Z_t^chi, namely
// E_pi[chi_hat(alpha)] / (alpha beta) * h(root). On lattice models the
// renewal assumptions behind the limit fail, so the value carries a warning.
inline NermanConstant nerman_constant(const Characteristic& chi,
                                      const ValidatedModel& model,
                                      const SpectralData& sd, TypeId root_type) {
  NermanConstant out;
  out.value = chi_hat_mean(chi, model, sd) / (sd.alpha * sd.beta) *
              sd.h[static_cast<std::size_t>(root_type)];
  out.lattice_warning = model.lattice();
  return out;
}

}  // namespace cmj
