#include <doctest.h>

#include "ltsurv/cohort.hpp"
#include "ltsurv/rng.hpp"
#include "test_support.hpp"

using namespace ltsurv;
using oracle::record;

TEST_CASE("validate_cohort accepts a minimal valid record") {
  const Cohort c = validate_cohort({record(0, 5, true)}, {}, true);
  CHECK(c.size() == 1);
  CHECK(c[0].weight == 1.0);
}

TEST_CASE("validate_cohort rejects Y <= E when consistency is required") {
  CHECK_THROWS_AS(validate_cohort({record(3, 2, true)}, {}, true),
                  TruncationViolation);
  // Without the flag the record is kept (it never enters any risk set).
  CHECK_NOTHROW(validate_cohort({record(3, 2, true)}, {}, false));
}

TEST_CASE("validate_cohort rejects arity mismatches") {
  CHECK_THROWS_AS(
      validate_cohort({record(0, 1, true, {1, 2}), record(0, 2, true, {1})}),
      InconsistentArity);
}

TEST_CASE("validate_cohort rejects empty and non-finite input") {
  CHECK_THROWS_AS(validate_cohort({}), EmptyCohort);
  auto r = record(0, 1, true);
  r.weight = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(validate_cohort({r}), NonFiniteValue);
  auto r2 = record(0, 1, true, {std::nan("")});
  CHECK_THROWS_AS(validate_cohort({r2}), NonFiniteValue);
}

TEST_CASE("risk_set_at matches the indicator I(E <= t <= Y)") {
  const Cohort c = validate_cohort(
      {record(0, 2, true), record(1, 3, true), record(4, 5, true)});
  CHECK(risk_set_at(c, 2.0) == std::vector<Eigen::Index>{0, 1});
  CHECK(risk_set_at(c, 4.5) == std::vector<Eigen::Index>{2});
  // entry exactly at t counts as at risk
  CHECK(risk_set_at(c, 1.0) == std::vector<Eigen::Index>{0, 1});
  CHECK(risk_set_at(c, 4.0) == std::vector<Eigen::Index>{2});
}

TEST_CASE("risk_set_at with no delayed entry covers everyone at min(Y)") {
  const Cohort c = validate_cohort(
      {record(0, 2, true), record(0, 3, false), record(0, 7, true)});
  CHECK(risk_set_at(c, 2.0).size() == 3);
}

TEST_CASE("risk_set_at grows by exactly one index when a covering record is added") {
  Rng rng(99);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<SurvivalRecord> recs;
    const int n = 2 + static_cast<int>(rng.uniform_index(6));
    for (int i = 0; i < n; ++i) {
      const double e = rng.uniform01() * 3.0;
      recs.push_back(record(e, e + 0.1 + rng.exponential(0.5), rng.bernoulli(0.5)));
    }
    const double t = 0.5 + rng.uniform01() * 3.0;
    const Cohort before = validate_cohort(recs, {}, true);
    auto base = risk_set_at(before, t);

    recs.push_back(record(t * 0.5, t * 2.0, true));  // E <= t <= Y by construction
    const Cohort after = validate_cohort(recs, {}, true);
    auto grown = risk_set_at(after, t);
    REQUIRE(grown.size() == base.size() + 1);
    CHECK(grown.back() == before.size());
  }
}

TEST_CASE("distinct_event_times deduplicates, sorts, drops censored") {
  const Cohort c = validate_cohort(
      {record(0, 2, true), record(0, 2, true), record(0, 3, false)});
  CHECK(distinct_event_times(c) == std::vector<double>{2.0});

  const Cohort all_censored =
      validate_cohort({record(0, 2, false), record(0, 3, false)});
  CHECK(distinct_event_times(all_censored).empty());

  const Cohort unsorted = validate_cohort({record(0, 5, true), record(0, 1, true)});
  CHECK(distinct_event_times(unsorted) == std::vector<double>{1.0, 5.0});
}

TEST_CASE("distinct_event_times is invariant to record order") {
  Rng rng(7);
  std::vector<SurvivalRecord> recs;
  for (int i = 0; i < 20; ++i)
    recs.push_back(record(0, 1 + rng.uniform_index(5), rng.bernoulli(0.7)));
  const auto a = distinct_event_times(validate_cohort(recs));
  std::reverse(recs.begin(), recs.end());
  const auto b = distinct_event_times(validate_cohort(recs));
  CHECK(a == b);
}
