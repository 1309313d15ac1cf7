#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cmj/forward_sim.hpp"
#include "cmj/model.hpp"
#include "cmj/rng.hpp"
#include "cmj/size_biased.hpp"
#include "cmj/spectral.hpp"

namespace cmj {

// One step of the spine. T is the inter-arrival time (birth of v_k minus
// birth of v_{k-1}; zero for the root), discount the accumulated factor
// prod e^{-alpha T_j} = e^{-alpha tau}, kept multiplicative so lattice models
// stay exact. Siblings are the off-spine points of v_k's life.
struct SpineRecord {
  int k = 0;
  TypeId sigma = -1;
  double inter_arrival = 0.0;
  double tau = 0.0;
  double discount = 1.0;
  double xi_bar = 0.0;
  double sibling_weight = 0.0;
  double life_points = 0.0;
  std::vector<SiblingGroup> siblings;
};

// Walk the distinguished line of descent only: each spine individual draws a
// size-biased life, the distinguished child becomes the next spine node.
// Types form the Markov chain with kernel h(r) mhat(s,r)/h(s); (type, T)
// pairs form a Markov renewal process. No off-spine population is built, so
// steps are cheap and never truncated.
inline std::vector<SpineRecord> simulate_spine(const ValidatedModel& model,
                                               const SpectralData& sd,
                                               RootChoice root, int n_steps,
                                               Rng rng) {
  if (n_steps < 1) throw std::invalid_argument("simulate_spine: need n_steps >= 1");
  if (root.law == RootLaw::from_pi) {
    throw std::invalid_argument("simulate_spine: root law must be fixed or nu");
  }
  const SizeBiasedSampler sampler(model, sd);
  std::vector<SpineRecord> records(static_cast<std::size_t>(n_steps));
  records[0].sigma = root.law == RootLaw::from_nu ? sample_type(sd.nu, rng) : root.type;
  for (int k = 0; k < n_steps; ++k) {
    auto& rec = records[static_cast<std::size_t>(k)];
    rec.k = k;
    auto step = sampler.sample_spine_step(rec.sigma, rng);
    rec.xi_bar = step.xi_bar;
    rec.sibling_weight = step.sibling_weight;
    rec.life_points = step.life_points;
    rec.siblings = std::move(step.siblings);
    if (k + 1 < n_steps) {
      auto& next = records[static_cast<std::size_t>(k + 1)];
      next.sigma = step.next_type;
      next.inter_arrival = step.next_age;
      next.tau = rec.tau + step.next_age;
      next.discount = rec.discount * std::exp(-sd.alpha * step.next_age);
    }
  }
  return records;
}

// Partial sums of the immigration transform along the spine:
//   eta_bar(n) = sum_{j<=n} e^{-alpha tau_j} sum_{siblings of v_j} e^{-alpha age} h,
// together with the term sequence and the upper bounds e^{-alpha tau_j} xi_bar_j.
struct EtaPartial {
  double value = 0.0;
  std::vector<double> terms;
  std::vector<double> upper_bounds;
};

inline EtaPartial eta_bar_partial(std::span<const SpineRecord> records,
                                  std::size_t n) {
  if (n >= records.size()) {
    throw std::invalid_argument("eta_bar_partial: n exceeds the record count");
  }
  EtaPartial out;
  out.terms.reserve(n + 1);
  out.upper_bounds.reserve(n + 1);
  for (std::size_t j = 0; j <= n; ++j) {
    const auto& rec = records[j];
    out.terms.push_back(rec.discount * rec.sibling_weight);
    out.upper_bounds.push_back(rec.discount * rec.xi_bar);
    out.value += out.terms.back();
  }
  return out;
}

// Cheap lower bound for W at the spine birth time tau_n:
// e^{-alpha tau_n} max(0, xi_bar_n - sup h) / h(sigma_0). All of v_n's
// children except the next spine node sit in the coming generation at that
// moment, and removing the single distinguished child costs at most sup h.
inline double sibling_lower_bound(const SpineRecord& record, const SpectralData& sd,
                                  TypeId sigma0) {
  const double excess = record.xi_bar - sd.sup_h;
  if (excess <= 0.0) return 0.0;
  return record.discount * excess / sd.h[static_cast<std::size_t>(sigma0)];
}

// Forward simulation under the size-biased population measure: the spine
// individuals draw size-biased lives with the distinguished child kept on the
// spine, all off-spine subtrees evolve under the ordinary law through the
// same queue and caps. W over the full pending set is then a submartingale.
inline Trajectory simulate_size_biased_population(
    const ValidatedModel& model, const SpectralData& sd, RootChoice root,
    double horizon, SimCaps caps, const std::vector<Characteristic>& chis,
    const std::vector<double>& sample_times, Rng rng, AuditLog* audit = nullptr) {
  if (root.law == RootLaw::from_pi) {
    // The change-of-measure tests mix over the same root law on both sides,
    // so pi-mixing is allowed here as well as nu-mixing.
  }
  const SizeBiasedSampler sampler(model, sd);
  return detail::simulate_population(model, sd, &sampler, root, horizon, caps, chis,
                                     sample_times, rng, audit);
}

}  // namespace cmj
