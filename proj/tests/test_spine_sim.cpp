#include "cmj/spine_sim.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "cmj/model.hpp"
#include "cmj/size_biased.hpp"
#include "cmj/spectral.hpp"
#include "cmj/stats.hpp"
#include "test_models.hpp"

using namespace cmj;
using cmj::testing::Asym2Oracle;

namespace {

struct Fixture {
  ValidatedModel model;
  SpectralData sd;
  explicit Fixture(const ModelSpec& spec)
      : model(validate_model(spec)), sd(spectral_analyze(model)) {}
};

}  // namespace

TEST_CASE("size-biased lives are never empty and normalize exactly") {
  for (auto spec : {cmj::testing::det2_spec(), cmj::testing::yule1_spec(),
                    cmj::testing::sym2_spec(), cmj::testing::asym2_spec(),
                    cmj::testing::bounded_sym2_spec()}) {
    const Fixture fx(spec);
    const SizeBiasedSampler sampler(fx.model, fx.sd);
    Rng rng(808);
    for (int i = 0; i < 5000; ++i) {
      const auto sb = sampler.sample(0, rng);
      REQUIRE_FALSE(sb.life.points.empty());
      REQUIRE(sb.distinguished < sb.life.points.size());
      // The distinguished-choice weights sum to xi_bar by construction.
      double acc = 0.0;
      for (const auto& p : sb.life.points) {
        acc += std::exp(-fx.sd.alpha * p.age) *
               fx.sd.h[static_cast<std::size_t>(p.child)];
      }
      CHECK(acc / xi_bar(sb.life, fx.sd.alpha, fx.sd.h) == 1.0);
    }
  }
}

TEST_CASE("det2 size bias is degenerate: ordinary life, uniform choice") {
  const Fixture fx(cmj::testing::det2_spec());
  const SizeBiasedSampler sampler(fx.model, fx.sd);
  Rng rng(909);
  int first = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto sb = sampler.sample(0, rng);
    REQUIRE(sb.life.points.size() == 2);
    CHECK(xi_bar(sb.life, fx.sd.alpha, fx.sd.h) == 1.0);
    if (sb.distinguished == 0) ++first;
  }
  const double freq = static_cast<double>(first) / n;
  const double se = std::sqrt(0.25 / n);
  CHECK(std::abs(freq - 0.5) < 4.0 * se);
}

TEST_CASE("sym2 distinguished child type is symmetric") {
  const Fixture fx(cmj::testing::sym2_spec());
  const SizeBiasedSampler sampler(fx.model, fx.sd);
  Rng rng(1010);
  int type0 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto sb = sampler.sample(0, rng);
    if (sb.life.points[sb.distinguished].child == 0) ++type0;
  }
  const double freq = static_cast<double>(type0) / n;
  CHECK(std::abs(freq - 0.5) < 4.0 * std::sqrt(0.25 / n));
}

TEST_CASE("mean xi_bar under the ordinary law equals h") {
  for (auto spec : {cmj::testing::yule1_spec(), cmj::testing::bounded_sym2_spec(),
                    cmj::testing::heavy_spec(), cmj::testing::heavy_multitype_spec()}) {
    const Fixture fx(spec);
    Rng master(1111);
    for (TypeId s = 0; s < fx.model.n_types(); ++s) {
      RunningMoments mom;
      Rng rng = master.substream(static_cast<std::uint64_t>(s));
      for (int i = 0; i < 100000; ++i) {
        mom.push(sample_xi_bar(fx.model, fx.sd, s, rng));
      }
      CHECK(std::abs(mom.mean() - fx.sd.h[static_cast<std::size_t>(s)]) <
            4.0 * mom.stderror());
    }
  }
}

TEST_CASE("exact and rejection samplers draw the same law on bounded counts") {
  const Fixture fx(cmj::testing::bounded_sym2_spec());
  const SizeBiasedSampler exact(fx.model, fx.sd);
  const double bound = 8.0 * fx.sd.sup_h;
  const int n = 30000;
  Rng master(1212);
  Rng r1 = master.substream(1), r2 = master.substream(2);
  std::vector<double> xb_exact, xb_rej, age_exact, age_rej;
  int type0_exact = 0, type0_rej = 0;
  for (int i = 0; i < n; ++i) {
    const auto a = exact.sample(0, r1);
    const auto b = sample_size_biased_life_rejection(fx.model, fx.sd, 0, bound, r2);
    xb_exact.push_back(xi_bar(a.life, fx.sd.alpha, fx.sd.h));
    xb_rej.push_back(xi_bar(b.life, fx.sd.alpha, fx.sd.h));
    age_exact.push_back(a.life.points[a.distinguished].age);
    age_rej.push_back(b.life.points[b.distinguished].age);
    type0_exact += a.life.points[a.distinguished].child == 0;
    type0_rej += b.life.points[b.distinguished].child == 0;
  }
  CHECK(ks_distance(xb_exact, xb_rej) < ks_threshold_1pct(n, n));
  CHECK(ks_distance(age_exact, age_rej) < ks_threshold_1pct(n, n));
  const double diff = std::abs(type0_exact - type0_rej) / static_cast<double>(n);
  CHECK(diff < 4.0 * std::sqrt(2.0 * 0.25 / n));
}

TEST_CASE("rejection sampler guards its bound") {
  const Fixture fx(cmj::testing::bounded_sym2_spec());
  Rng rng(1313);
  CHECK_THROWS_AS(
      [&] {
        for (int i = 0; i < 2000; ++i) {
          sample_size_biased_life_rejection(fx.model, fx.sd, 0, 0.5, rng);
        }
      }(),
      std::domain_error);

  const Fixture det2(cmj::testing::det2_spec());
  Rng rng2(14);
  for (int i = 0; i < 100; ++i) {
    const auto sb =
        sample_size_biased_life_rejection(det2.model, det2.sd, 0, 1.0, rng2);
    CHECK(sb.life.points.size() == 2);
  }
}

TEST_CASE("det2 spine is fully deterministic") {
  const Fixture fx(cmj::testing::det2_spec());
  const auto records =
      simulate_spine(fx.model, fx.sd, RootChoice::fixed(0), 40, Rng(5));
  REQUIRE(records.size() == 40);
  for (const auto& rec : records) {
    CHECK(rec.sigma == 0);
    CHECK(rec.xi_bar == 1.0);
    if (rec.k > 0) {
      CHECK(rec.inter_arrival == 1.0);
      CHECK(rec.tau == static_cast<double>(rec.k));
      CHECK(rec.discount == std::ldexp(1.0, -rec.k));
    }
    REQUIRE(rec.siblings.size() == 1);
    CHECK(rec.siblings[0].count == 1.0);
    CHECK(rec.siblings[0].age == 1.0);
    CHECK(rec.sibling_weight == 0.5);
  }
}

TEST_CASE("spine type chain matches the analytic kernel and occupation") {
  struct Case {
    ModelSpec spec;
    std::array<std::array<double, 2>, 2> kernel;
    std::array<double, 2> nu;
  };
  const std::vector<Case> cases = {
      {cmj::testing::sym2_spec(), {{{0.5, 0.5}, {0.5, 0.5}}}, {0.5, 0.5}},
      {cmj::testing::asym2_spec(),
       {{{Asym2Oracle::kernel00, Asym2Oracle::kernel01},
         {Asym2Oracle::kernel10, Asym2Oracle::kernel11}}},
       {Asym2Oracle::nu0, Asym2Oracle::nu1}}};
  for (const auto& c : cases) {
    const Fixture fx(c.spec);
    const int n = 100000;
    const auto records = simulate_spine(fx.model, fx.sd, RootChoice::nu(), n, Rng(42));
    std::array<std::array<double, 2>, 2> trans{};
    std::array<double, 2> occupation{};
    std::array<double, 2> visits{};
    for (int k = 0; k + 1 < n; ++k) {
      const auto s = static_cast<std::size_t>(records[static_cast<std::size_t>(k)].sigma);
      const auto r =
          static_cast<std::size_t>(records[static_cast<std::size_t>(k + 1)].sigma);
      trans[s][r] += 1.0;
      visits[s] += 1.0;
      occupation[s] += 1.0 / n;
    }
    occupation[static_cast<std::size_t>(records.back().sigma)] += 1.0 / n;
    for (std::size_t s = 0; s < 2; ++s) {
      double tv = 0.0;
      for (std::size_t r = 0; r < 2; ++r) {
        tv += 0.5 * std::abs(trans[s][r] / visits[s] - c.kernel[s][r]);
      }
      CHECK(tv <= 0.02);
    }
    const double occ_tv = 0.5 * (std::abs(occupation[0] - c.nu[0]) +
                                 std::abs(occupation[1] - c.nu[1]));
    CHECK(occ_tv <= 0.02);
  }
}

TEST_CASE("renewal mean and strong law along the spine") {
  const Fixture fx(cmj::testing::sym2_spec());
  const int n = 100000;
  const auto records = simulate_spine(fx.model, fx.sd, RootChoice::nu(), n, Rng(99));
  RunningMoments mom;
  for (int k = 1; k < n; ++k) {
    mom.push(records[static_cast<std::size_t>(k)].inter_arrival);
  }
  CHECK(std::abs(mom.mean() - fx.sd.beta) < 4.0 * mom.stderror());
  // tau_n / n within 5% of beta at n = 1e4.
  const double ratio = records[10000].tau / 10000.0;
  CHECK(std::abs(ratio - fx.sd.beta) < 0.05 * fx.sd.beta);
}

TEST_CASE("eta partial sums") {
  SECTION("det2 hand values") {
    const Fixture fx(cmj::testing::det2_spec());
    const auto records =
        simulate_spine(fx.model, fx.sd, RootChoice::fixed(0), 60, Rng(3));
    const auto eta2 = eta_bar_partial(records, 2);
    CHECK(eta2.value == 0.875);
    CHECK(eta2.terms.size() == 3);
    const auto eta_all = eta_bar_partial(records, 59);
    CHECK(eta_all.value == Catch::Approx(1.0).margin(1e-12));
    for (std::size_t j = 0; j < eta_all.upper_bounds.size(); ++j) {
      CHECK(eta_all.upper_bounds[j] == std::ldexp(1.0, -static_cast<int>(j)));
      CHECK(eta_all.terms[j] <= eta_all.upper_bounds[j]);
    }
  }
  SECTION("no siblings means zero immigration") {
    std::vector<SpineRecord> records(5);
    for (int k = 0; k < 5; ++k) {
      auto& rec = records[static_cast<std::size_t>(k)];
      rec.k = k;
      rec.xi_bar = 0.7;
      rec.sibling_weight = 0.0;
      rec.discount = std::exp(-0.3 * k);
    }
    CHECK(eta_bar_partial(records, 4).value == 0.0);
  }
  SECTION("sym2 partial sums are nondecreasing and settle") {
    const Fixture fx(cmj::testing::sym2_spec());
    Rng master(1414);
    for (int rep = 0; rep < 10; ++rep) {
      const auto records = simulate_spine(fx.model, fx.sd, RootChoice::nu(), 1000,
                                          master.substream(7, rep));
      const auto eta = eta_bar_partial(records, 999);
      for (double t : eta.terms) CHECK(t >= 0.0);
      CHECK(std::isfinite(eta.value));
      const auto eta_half = eta_bar_partial(records, 499);
      CHECK(eta.value >= eta_half.value);
      CHECK(eta.value - eta_half.value < 1e-12);  // the discount has collapsed
    }
  }
  SECTION("bounds check") {
    const Fixture fx(cmj::testing::det2_spec());
    const auto records =
        simulate_spine(fx.model, fx.sd, RootChoice::fixed(0), 3, Rng(1));
    CHECK_THROWS_AS(eta_bar_partial(records, 3), std::invalid_argument);
  }
}

TEST_CASE("sibling lower bound clamps and detects the divergent regime") {
  SECTION("det2 is identically zero") {
    const Fixture fx(cmj::testing::det2_spec());
    const auto records =
        simulate_spine(fx.model, fx.sd, RootChoice::fixed(0), 20, Rng(4));
    for (const auto& rec : records) {
      CHECK(sibling_lower_bound(rec, fx.sd, 0) == 0.0);
    }
  }
  SECTION("clamped when xi_bar is below sup h") {
    SpineRecord rec;
    rec.xi_bar = 0.5;
    rec.discount = 0.25;
    SpectralData sd;
    sd.sup_h = 1.0;
    sd.h = {1.0};
    CHECK(sibling_lower_bound(rec, sd, 0) == 0.0);
  }
  SECTION("heavy fixture: running maximum keeps growing") {
    const Fixture fx(cmj::testing::heavy_spec());
    const auto records =
        simulate_spine(fx.model, fx.sd, RootChoice::fixed(0), 500, Rng(20250801));
    double max_early = 0.0, max_all = 0.0;
    for (const auto& rec : records) {
      const double b = sibling_lower_bound(rec, fx.sd, 0);
      if (rec.k <= 50) max_early = std::max(max_early, b);
      max_all = std::max(max_all, b);
    }
    CHECK(max_all > 10.0 * std::max(max_early, 1.0));
  }
}

TEST_CASE("size-biased population: det2 degenerate and sym2 submartingale") {
  SECTION("det2 has W identically one") {
    const Fixture fx(cmj::testing::det2_spec());
    const auto traj = simulate_size_biased_population(
        fx.model, fx.sd, RootChoice::fixed(0), 8.0, {100000, 100000}, {},
        {0.0, 1.0, 3.5, 8.0}, Rng(6));
    REQUIRE(traj.n_valid == 4);
    for (double w : traj.w) CHECK(w == 1.0);
  }
  SECTION("sym2 mean W grows between t = 2 and t = 4") {
    const Fixture fx(cmj::testing::sym2_spec());
    Rng master(1515);
    RunningMoments w2, w4;
    int discarded = 0;
    for (int rep = 0; rep < 2000; ++rep) {
      const auto traj = simulate_size_biased_population(
          fx.model, fx.sd, RootChoice::nu(), 4.0, {300000, 300000}, {},
          {2.0, 4.0}, master.substream(8, rep));
      if (traj.truncated) {
        ++discarded;
        continue;
      }
      w2.push(traj.w[0]);
      w4.push(traj.w[1]);
    }
    CHECK(discarded < 20);
    const double combined =
        std::sqrt(w2.stderror() * w2.stderror() + w4.stderror() * w4.stderror());
    CHECK(w4.mean() >= w2.mean() - 4.0 * combined);
    // Under the size-biased measure W_t has mean E[W_t^2] > 1.
    CHECK(w2.mean() > 1.0);
  }
}

TEST_CASE("heavy spine steps aggregate without materializing") {
  const Fixture fx(cmj::testing::heavy_spec());
  const auto records =
      simulate_spine(fx.model, fx.sd, RootChoice::fixed(0), 2000, Rng(17));
  double max_points = 0.0;
  for (const auto& rec : records) {
    CHECK(std::isfinite(rec.xi_bar));
    CHECK(rec.life_points >= 1.0);
    max_points = std::max(max_points, rec.life_points);
  }
  // The size-biased heavy tail throws enormous sibling groups with
  // noticeable probability; 2000 steps should produce some.
  CHECK(max_points > 1e6);
}
