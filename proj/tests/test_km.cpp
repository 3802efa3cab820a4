#include <doctest.h>

#include <cmath>

#include "ltsurv/km.hpp"
#include "ltsurv/rng.hpp"
#include "test_support.hpp"

using namespace ltsurv;
using oracle::record;

namespace {

Cohort three_record_example() {
  return validate_cohort(
      {record(0, 2, true), record(1, 3, true), record(4, 5, true)}, {}, true);
}

}  // namespace

TEST_CASE("single certain death gives F=1, S=0") {
  const KMCurve c = fit_km(validate_cohort({record(0, 5, true)}));
  REQUIRE(c.event_times == std::vector<double>{5.0});
  CHECK(c.failure_probs[0] == 1.0);
  CHECK(c.survival[0] == 0.0);
}

TEST_CASE("three-record delayed-entry example evaluates to F = [1/2, 1, 1]") {
  const KMCurve c = fit_km(three_record_example(), true);
  REQUIRE(c.event_times == std::vector<double>{2.0, 3.0, 5.0});
  CHECK(c.failure_probs[0] == 0.5);
  CHECK(c.failure_probs[1] == 1.0);
  CHECK(c.failure_probs[2] == 1.0);
  CHECK(c.survival[0] == 0.5);
  CHECK(c.survival[1] == 0.0);
  CHECK(c.survival[2] == 0.0);
  CHECK(c.at_risk_mass[0] == 2.0);
  CHECK(c.n_events_mass[0] == 1.0);
}

TEST_CASE("constant weights c > 0 reproduce the unit-weight curve exactly") {
  const Cohort cohort = three_record_example();
  const KMCurve unit = fit_km(cohort, true);
  for (double c : {0.3, 2.0, 17.5, 1e-6, 3.0e7}) {
    const Eigen::VectorXd w = Eigen::VectorXd::Constant(cohort.size(), c);
    const KMCurve scaled = fit_km(cohort, true, w);
    CHECK(scaled.failure_probs == unit.failure_probs);
    CHECK(scaled.survival == unit.survival);
    CHECK(scaled.at_risk_mass == unit.at_risk_mass);
    CHECK(scaled.n_events_mass == unit.n_events_mass);
  }
}

TEST_CASE("weight rescaling leaves the curve unchanged") {
  Rng rng(321);
  std::vector<SurvivalRecord> recs;
  for (int i = 0; i < 60; ++i) {
    const double e = rng.bernoulli(0.4) ? rng.uniform01() * 2 : 0.0;
    recs.push_back(record(e, e + 0.05 + rng.exponential(0.4), rng.bernoulli(0.6)));
  }
  const Cohort cohort = validate_cohort(recs, {}, true);
  Eigen::VectorXd w(cohort.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = 0.2 + rng.uniform01() * 3.0;

  const KMCurve base = fit_km(cohort, true, w);
  SUBCASE("power-of-two scale: bitwise identical") {
    for (double c : {0.125, 2.0, 1024.0}) {
      const KMCurve scaled = fit_km(cohort, true, Eigen::VectorXd(c * w));
      CHECK(scaled.survival == base.survival);
      CHECK(scaled.failure_probs == base.failure_probs);
      CHECK(scaled.at_risk_mass == base.at_risk_mass);
    }
  }
  SUBCASE("arbitrary scale: equal to rounding error") {
    for (double c : {3.7, 0.019, 251.0}) {
      const KMCurve scaled = fit_km(cohort, true, Eigen::VectorXd(c * w));
      for (std::size_t j = 0; j < base.survival.size(); ++j)
        CHECK(scaled.survival[j] == doctest::Approx(base.survival[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("with E = 0 and unit weights the classical product-limit curve is recovered exactly") {
  Rng rng(2024);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 1 + static_cast<int>(rng.uniform_index(8));
    std::vector<double> time;
    std::vector<bool> ev;
    std::vector<SurvivalRecord> recs;
    bool any_event = false;
    for (int i = 0; i < n; ++i) {
      // small integer grid so ties are common
      const double t = 1.0 + static_cast<double>(rng.uniform_index(5));
      const bool e = rng.bernoulli(0.6);
      any_event = any_event || e;
      time.push_back(t);
      ev.push_back(e);
      recs.push_back(record(0, t, e));
    }
    if (!any_event) continue;
    const auto expected = oracle::textbook_km(time, ev);
    const KMCurve got = fit_km(validate_cohort(recs), false);
    REQUIRE(got.event_times.size() == expected.size());
    for (std::size_t j = 0; j < expected.size(); ++j) {
      CHECK(got.event_times[j] == expected[j].time);
      CHECK(got.survival[j] == expected[j].survival);  // identical arithmetic path
    }
  }
}

TEST_CASE("survival is nonincreasing and satisfies the product form") {
  Rng rng(11);
  std::vector<SurvivalRecord> recs;
  for (int i = 0; i < 300; ++i) {
    const double e = rng.bernoulli(0.5) ? rng.exponential(1.0) : 0.0;
    recs.push_back(record(e, e + 0.01 + rng.exponential(0.3), rng.bernoulli(0.5)));
  }
  const Cohort cohort = validate_cohort(recs, {}, true);
  Eigen::VectorXd w(cohort.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = 0.5 + rng.uniform01();

  const KMCurve c = fit_km(cohort, true, w);
  double prod = 1.0;
  for (std::size_t j = 0; j < c.survival.size(); ++j) {
    if (j > 0) CHECK(c.survival[j] <= c.survival[j - 1]);
    CHECK(c.survival[j] >= 0.0);
    CHECK(c.survival[j] <= 1.0);
    prod *= 1.0 - c.failure_probs[j];
    CHECK(std::abs(c.survival[j] - prod) < 1e-12);
  }
  CHECK(c.survival[0] == 1.0 - c.failure_probs[0]);
}

TEST_CASE("an event whose risk set is empty raises ZeroRiskMass") {
  // Y <= E record admitted without the consistency check: it never enters
  // any risk set, so its own event time has zero at-risk mass.
  const Cohort bad = validate_cohort({record(3, 2, true), record(5, 6, true)},
                                     {}, false);
  CHECK_THROWS_AS(fit_km(bad, true), ZeroRiskMass);
}

TEST_CASE("median extraction uses the first time with survival <= 0.5") {
  KMCurve c;
  c.event_times = {4.0, 10.0};
  c.survival = {0.8, 0.45};
  CHECK(median_survival(c) == 10.0);

  KMCurve flat;
  flat.event_times = {4.0, 10.0};
  flat.survival = {0.9, 0.6};
  CHECK(!median_survival(flat).has_value());

  KMCurve exact;
  exact.event_times = {1.0, 2.0, 3.0};
  exact.survival = {0.8, 0.5, 0.2};
  CHECK(median_survival(exact) == 2.0);
}

TEST_CASE("median of exponential(mean 12) draws approaches 12 log 2") {
  Rng rng(5150);
  std::vector<SurvivalRecord> recs;
  for (int i = 0; i < 10000; ++i)
    recs.push_back(record(0, rng.exponential(1.0 / 12.0), true));
  const auto med = median_survival(fit_km(validate_cohort(recs), false));
  REQUIRE(med.has_value());
  CHECK(*med == doctest::Approx(12.0 * std::log(2.0)).epsilon(0.3 / 8.3));
}

TEST_CASE("survival_at evaluates the right-continuous step function") {
  const KMCurve c = fit_km(three_record_example(), true);
  CHECK(survival_at(c, 1.9) == 1.0);
  CHECK(survival_at(c, 2.0) == 0.5);
  CHECK(survival_at(c, 2.5) == 0.5);
  CHECK(survival_at(c, 3.0) == 0.0);
  CHECK(survival_at(c, 100.0) == 0.0);
}

TEST_CASE("bootstrap is deterministic given the seed") {
  Rng rng(8);
  std::vector<SurvivalRecord> recs;
  for (int i = 0; i < 80; ++i)
    recs.push_back(record(0, 0.01 + rng.exponential(0.2), rng.bernoulli(0.7)));
  const Cohort cohort = validate_cohort(recs);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(cohort.size());

  const Interval a = km_bootstrap_ci(cohort, w, 200, 0.95, 424242);
  const Interval b = km_bootstrap_ci(cohort, w, 200, 0.95, 424242);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
  const Interval c = km_bootstrap_ci(cohort, w, 200, 0.95, 424243);
  CHECK((a.lower != c.lower || a.upper != c.upper));
}

TEST_CASE("a single resample collapses the percentile interval to a point") {
  Rng rng(9);
  std::vector<SurvivalRecord> recs;
  for (int i = 0; i < 40; ++i)
    recs.push_back(record(0, 0.01 + rng.exponential(0.2), true));
  const Cohort cohort = validate_cohort(recs);
  const Interval ci =
      km_bootstrap_ci(cohort, Eigen::VectorXd::Ones(cohort.size()), 1, 0.95, 3);
  CHECK(ci.lower == ci.upper);
}

TEST_CASE("mostly-censored resamples abort, occasional ones are skipped") {
  // One event carrying negligible weight: nearly every weighted resample
  // has no events at all.
  std::vector<SurvivalRecord> recs;
  recs.push_back(record(0, 1.0, true, {}, 1e-9));
  for (int i = 0; i < 9; ++i) recs.push_back(record(0, 2.0 + i, false, {}, 1.0));
  const Cohort cohort = validate_cohort(recs);
  CHECK_THROWS_AS(
      km_bootstrap_ci(cohort, cohort.weights(), 100, 0.95, 77), DegenerateResample);

  // Median undefined in a small share of resamples: skipped, not fatal.
  Rng rng(10);
  std::vector<SurvivalRecord> recs2;
  for (int i = 0; i < 30; ++i)
    recs2.push_back(record(0, 0.01 + rng.exponential(0.5), rng.bernoulli(0.75)));
  const Cohort cohort2 = validate_cohort(recs2);
  KMBootstrapOptions opts;
  opts.n_resamples = 400;
  opts.seed = 4;
  const KMBootstrapResult res =
      km_bootstrap(cohort2, Eigen::VectorXd::Ones(cohort2.size()), opts);
  CHECK(res.n_degenerate >= 0);
  CHECK(res.n_degenerate <= 20);
  CHECK(std::isfinite(res.statistic_ci.lower));
}

TEST_CASE("bootstrap band wraps the point estimate") {
  Rng rng(12);
  std::vector<SurvivalRecord> recs;
  for (int i = 0; i < 100; ++i) {
    const double e = rng.bernoulli(0.3) ? rng.uniform01() : 0.0;
    recs.push_back(record(e, e + 0.01 + rng.exponential(0.25), rng.bernoulli(0.6)));
  }
  const Cohort cohort = validate_cohort(recs, {}, true);
  Eigen::VectorXd w(cohort.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = 0.5 + 2.0 * rng.uniform01();

  KMBootstrapOptions opts;
  opts.n_resamples = 150;
  opts.seed = 5;
  const KMBootstrapResult res = km_bootstrap(cohort, w, opts);
  const KMCurve point = fit_km(cohort, true, w);
  REQUIRE(res.band.times == point.event_times);
  for (std::size_t j = 0; j < point.survival.size(); ++j) {
    CHECK(res.band.lower[j] <= point.survival[j]);
    CHECK(res.band.upper[j] >= point.survival[j]);
  }
}

TEST_CASE("uniform_keep_weights mode matches weighted resampling for unit weights") {
  Rng rng(13);
  std::vector<SurvivalRecord> recs;
  for (int i = 0; i < 60; ++i)
    recs.push_back(record(0, 0.01 + rng.exponential(0.3), rng.bernoulli(0.7)));
  const Cohort cohort = validate_cohort(recs);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(cohort.size());
  const Interval a = km_bootstrap_ci(cohort, w, 300, 0.9, 21, KMStatistic::median,
                                     0.0, BootstrapMode::weighted_resample);
  const Interval b = km_bootstrap_ci(cohort, w, 300, 0.9, 21, KMStatistic::median,
                                     0.0, BootstrapMode::uniform_keep_weights);
  // identical draws: a uniform pick and a weighted pick over equal masses
  // consume one uniform each
  CHECK(a.lower == doctest::Approx(b.lower));
  CHECK(a.upper == doctest::Approx(b.upper));
}
