#include "cmj/model.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "cmj/rng.hpp"
#include "cmj/spectral.hpp"
#include "cmj/stats.hpp"
#include "test_models.hpp"

using namespace cmj;

TEST_CASE("validate_model accepts the bundled fixtures") {
  for (auto spec : {cmj::testing::det2_spec(), cmj::testing::yule1_spec(),
                    cmj::testing::sym2_spec(), cmj::testing::asym2_spec(),
                    cmj::testing::bounded_sym2_spec(), cmj::testing::heavy_spec(),
                    cmj::testing::heavy_multitype_spec()}) {
    CHECK_NOTHROW(validate_model(spec));
  }
  const auto det2 = validate_model(cmj::testing::det2_spec());
  CHECK(det2.lattice());
  CHECK_FALSE(validate_model(cmj::testing::sym2_spec()).lattice());
  CHECK(validate_model(cmj::testing::heavy_spec()).lattice());
}

TEST_CASE("validate_model rejects malformed specs") {
  SECTION("channel references undeclared type") {
    ModelSpec spec = cmj::testing::det2_spec();
    spec.channels[0].child = 3;
    const auto errors = ValidatedModel::check(spec);
    REQUIRE_FALSE(errors.empty());
    CHECK_THROWS_AS(validate_model(spec), std::invalid_argument);
  }
  SECTION("type without channels and not absorbing") {
    ModelSpec spec = cmj::testing::det2_spec();
    spec.types.labels.push_back("orphan");
    CHECK_THROWS_AS(validate_model(spec), std::invalid_argument);
  }
  SECTION("duplicate labels") {
    ModelSpec spec = cmj::testing::sym2_spec();
    spec.types.labels[1] = "a";
    CHECK_THROWS_AS(validate_model(spec), std::invalid_argument);
  }
  SECTION("unnormalized pmf is rejected at construction") {
    CHECK_THROWS_WITH(CountDistribution::table({0.5, 0.0, 0.6}),
                      Catch::Matchers::ContainsSubstring("1.1"));
  }
}

TEST_CASE("sample_life on det2 is two children at age one") {
  const auto model = validate_model(cmj::testing::det2_spec());
  Rng rng(42);
  for (int i = 0; i < 50; ++i) {
    const Life life = sample_life(model, 0, rng);
    REQUIRE(life.points.size() == 2);
    CHECK(life.points[0].age == 1.0);
    CHECK(life.points[1].age == 1.0);
    CHECK(life.points[0].child == 0);
    CHECK_FALSE(life.death_age.has_value());
  }
}

TEST_CASE("absorbing types produce empty lives") {
  ModelSpec spec;
  spec.name = "with_sink";
  spec.types.labels = {"a", "sink"};
  spec.absorbing = {false, true};
  spec.channels.push_back({0, 0, CountDistribution::poisson(1.5),
                           AgeDistribution::exponential(1.0), false});
  spec.channels.push_back({0, 1, CountDistribution::poisson(0.5),
                           AgeDistribution::exponential(1.0), false});
  const auto model = validate_model(spec);
  Rng rng(1);
  const Life life = sample_life(model, 1, rng);
  CHECK(life.points.empty());
}

TEST_CASE("yule1 lives share one exponential age across both children") {
  const auto model = validate_model(cmj::testing::yule1_spec());
  Rng rng(7);
  RunningMoments mom;
  std::vector<double> ages;
  for (int i = 0; i < 20000; ++i) {
    const Life life = sample_life(model, 0, rng);
    REQUIRE(life.points.size() == 2);
    CHECK(life.points[0].age == life.points[1].age);
    CHECK(life.death_age.has_value());
    mom.push(life.points[0].age);
    ages.push_back(life.points[0].age);
  }
  CHECK(std::abs(mom.mean() - 1.0) < 4.0 * mom.stderror());
  // One-sample KS against the exponential(1) CDF.
  std::sort(ages.begin(), ages.end());
  double d = 0.0;
  for (std::size_t i = 0; i < ages.size(); ++i) {
    const double cdf = -std::expm1(-ages[i]);
    const double lo = static_cast<double>(i) / ages.size();
    const double hi = static_cast<double>(i + 1) / ages.size();
    d = std::max({d, std::abs(cdf - lo), std::abs(cdf - hi)});
  }
  CHECK(d < 1.63 / std::sqrt(static_cast<double>(ages.size())));
}

TEST_CASE("life points are sorted and strictly positive") {
  for (auto spec : {cmj::testing::sym2_spec(), cmj::testing::asym2_spec(),
                    cmj::testing::bounded_sym2_spec(), cmj::testing::heavy_spec()}) {
    const auto model = validate_model(spec);
    Rng rng(1234);
    for (int i = 0; i < 10000; ++i) {
      const TypeId s = static_cast<TypeId>(i % model.n_types());
      const Life life = sample_life(model, s, rng);
      for (std::size_t j = 0; j < life.points.size(); ++j) {
        CHECK(life.points[j].age > 0.0);
        CHECK(std::isfinite(life.points[j].age));
        if (j > 0) CHECK(life.points[j - 1].age <= life.points[j].age);
      }
    }
  }
}

TEST_CASE("per-channel empirical count means match the analytic means") {
  const auto model = validate_model(cmj::testing::asym2_spec());
  Rng master(55);
  for (int c = 0; c < model.n_channels(); ++c) {
    RunningMoments mom;
    Rng rng = master.substream(static_cast<std::uint64_t>(c));
    for (int i = 0; i < 100000; ++i) {
      mom.push(model.channel(c).count.sample(rng));
    }
    CHECK(std::abs(mom.mean() - model.channel_mean(c)) < 4.0 * mom.stderror());
  }
}

TEST_CASE("xi_bar evaluates the discounted h-weighted sum") {
  const std::vector<double> h1 = {1.0};
  SECTION("det2 life at alpha = ln 2 gives exactly one") {
    Life life;
    life.points = {{1.0, 0}, {1.0, 0}};
    CHECK(xi_bar(life, std::log(2.0), h1) == 1.0);
  }
  SECTION("empty life gives zero") {
    CHECK(xi_bar(Life{}, 1.0, h1) == 0.0);
  }
  SECTION("shared age 0.7 at alpha = 1") {
    Life life;
    life.points = {{0.7, 0}, {0.7, 0}};
    CHECK(xi_bar(life, 1.0, h1) ==
          Catch::Approx(2.0 * std::exp(-0.7)).epsilon(1e-15));
  }
  SECTION("additive over concatenation, up to rounding") {
    Rng rng(9);
    const auto model = validate_model(cmj::testing::sym2_spec());
    const std::vector<double> h = {1.0, 1.0};
    for (int i = 0; i < 200; ++i) {
      Life a = sample_life(model, 0, rng);
      Life b = sample_life(model, 1, rng);
      Life cat;
      cat.points = a.points;
      cat.points.insert(cat.points.end(), b.points.begin(), b.points.end());
      const double lhs = xi_bar(cat, 1.0, h);
      const double rhs = xi_bar(a, 1.0, h) + xi_bar(b, 1.0, h);
      CHECK(lhs == Catch::Approx(rhs).epsilon(4e-16));
    }
  }
}

TEST_CASE("interval-type discretization via the midpoint rule") {
  const auto age = AgeDistribution::exponential(1.0);
  SECTION("constant kernel gives equal channel means") {
    const auto spec = discretize_interval_model(
        [](double, double) { return 2.0; }, age, 2, "flat");
    const auto model = validate_model(spec);
    REQUIRE(model.n_channels() == 4);
    for (int c = 0; c < 4; ++c) CHECK(model.channel_mean(c) == 1.0);
  }
  SECTION("n = 1 collapses to a single type with the row mass") {
    const auto spec = discretize_interval_model(
        [](double, double) { return 3.0; }, age, 1, "point");
    REQUIRE(spec.types.labels.size() == 1);
    REQUIRE(spec.channels.size() == 1);
    CHECK(spec.channels[0].count.mean() == 3.0);
  }
  SECTION("k(x,y) = 2y with n = 4 gives means (1,3,5,7)/16 per row") {
    const auto spec = discretize_interval_model(
        [](double, double y) { return 2.0 * y; }, age, 4, "ramp");
    const auto model = validate_model(spec);
    REQUIRE(model.n_channels() == 16);
    for (int c = 0; c < model.n_channels(); ++c) {
      const auto& ch = model.channel(c);
      const double expected = (2.0 * ch.child + 1.0) / 16.0;
      CHECK(model.channel_mean(c) == Catch::Approx(expected).epsilon(1e-15));
    }
  }
  SECTION("rejects negative or non-finite kernels") {
    CHECK_THROWS_AS(discretize_interval_model(
                        [](double, double) { return -1.0; }, age, 2, "bad"),
                    std::invalid_argument);
  }
}

TEST_CASE("single-type deterministic-age models reduce to the GW identity") {
  // With deterministic age 1 and count X, xi_bar = X e^{-alpha}; for mean 2
  // the value equals X/m to the last bit.
  const auto model = validate_model(cmj::testing::gw_spec(2.0));
  const auto sd = spectral_analyze(model);
  REQUIRE(std::exp(-sd.alpha) == 0.5);
  Rng rng(77);
  for (int i = 0; i < 10000; ++i) {
    const Life life = sample_life(model, 0, rng);
    const double x = static_cast<double>(life.points.size());
    const double xb = xi_bar(life, sd.alpha, sd.h);
    CHECK(xb == x * std::exp(-sd.alpha));
    CHECK(xb == x / 2.0);
  }
}
