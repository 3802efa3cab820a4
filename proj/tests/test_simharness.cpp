#include <doctest.h>

#include <cmath>

#include "ltsurv/simharness.hpp"
#include "ltsurv/stats.hpp"

using namespace ltsurv;

namespace {

bool same_or_both_nan(double a, double b) {
  return a == b || (std::isnan(a) && std::isnan(b));
}

IterationResult synthetic_result(double truth, double estimate, bool covered) {
  IterationResult it;
  for (auto e : {Estimand::conditional_hr, Estimand::marginal_hr, Estimand::rw_median}) {
    it.truth[static_cast<std::size_t>(e)] = truth;
    for (auto k : {EstimatorKind::naive, EstimatorKind::adjusted, EstimatorKind::weighted}) {
      if (!estimator_defined(e, k)) continue;
      EstimatorResult& slot = it.at(e, k);
      slot.estimate = estimate;
      slot.has_ci = true;
      slot.ci = covered ? Interval{truth - 1.0, truth + 1.0}
                        : Interval{truth + 2.0, truth + 3.0};
    }
  }
  return it;
}

}  // namespace

TEST_CASE("summarize: exact estimates give zero bias; constructed inflation gives 0.10") {
  std::vector<IterationResult> exact = {synthetic_result(2.0, 2.0, true),
                                        synthetic_result(4.0, 4.0, false)};
  const SimSummary s = summarize(exact);
  CHECK(s.at(Estimand::marginal_hr, EstimatorKind::naive).relative_bias == 0.0);
  CHECK(s.at(Estimand::marginal_hr, EstimatorKind::naive).coverage_iteration_truth ==
        0.5);
  // with a scenario-level truth supplied, fixed-truth coverage is filled too
  ScenarioTruths truths;
  truths.marginal_hr = 2.0;
  truths.conditional_hr = 2.0;
  truths.rw_median = 2.0;
  const SimSummary sf = summarize(exact, truths);
  CHECK(sf.at(Estimand::marginal_hr, EstimatorKind::naive).coverage == 0.5);

  std::vector<IterationResult> inflated = {synthetic_result(2.0, 2.2, true),
                                           synthetic_result(5.0, 5.5, true)};
  const SimSummary t = summarize(inflated);
  CHECK(t.at(Estimand::rw_median, EstimatorKind::weighted).relative_bias ==
        doctest::Approx(0.10).epsilon(1e-12));
  CHECK(t.at(Estimand::rw_median, EstimatorKind::weighted).coverage_iteration_truth ==
        1.0);
}

TEST_CASE("summarize throws AllFailed when an estimator never succeeds") {
  IterationResult it = synthetic_result(2.0, 2.0, true);
  it.at(Estimand::marginal_hr, EstimatorKind::weighted).failed = true;
  std::vector<IterationResult> results = {it};
  CHECK_THROWS_AS(summarize(results), AllFailed);
}

TEST_CASE("run_iteration is deterministic given the seed") {
  SimScenario s;
  const double lambda = calibrate_entry_rate(s);
  HarnessOptions opts;
  opts.bootstrap_resamples = 40;
  const IterationResult a = run_iteration(s, lambda, 5150, opts);
  const IterationResult b = run_iteration(s, lambda, 5150, opts);
  for (auto e : {Estimand::conditional_hr, Estimand::marginal_hr, Estimand::rw_median}) {
    CHECK(a.truth_of(e) == b.truth_of(e));
    for (auto k : {EstimatorKind::naive, EstimatorKind::adjusted, EstimatorKind::weighted}) {
      if (!estimator_defined(e, k)) continue;
      CHECK(same_or_both_nan(a.at(e, k).estimate, b.at(e, k).estimate));
      CHECK(same_or_both_nan(a.at(e, k).ci.lower, b.at(e, k).ci.lower));
      CHECK(same_or_both_nan(a.at(e, k).ci.upper, b.at(e, k).ci.upper));
    }
  }
}

TEST_CASE("without confounding, adjusted and weighted marginal estimates agree") {
  // With beta_z = 0 the covariates do not confound, so the two estimators
  // target the same quantity; per-iteration agreement tightens as the
  // weights concentrate near 1 (milder truncation).
  HarnessOptions opts;
  opts.bootstrap_resamples = 30;
  for (double target : {0.7, 0.5}) {
    SimScenario s;
    s.beta_z = 0.0;
    s.beta_entry = std::log(0.5);
    s.target_truncation = target;
    const double lambda = calibrate_entry_rate(s);

    std::vector<double> diffs, adj_bias, wtd_bias;
    for (int i = 0; i < 200; ++i) {
      const IterationResult it = run_iteration(s, lambda, derive_seed(400, i), opts);
      const auto& adj = it.at(Estimand::marginal_hr, EstimatorKind::adjusted);
      const auto& wtd = it.at(Estimand::marginal_hr, EstimatorKind::weighted);
      if (adj.failed || wtd.failed) continue;
      diffs.push_back(std::abs(std::log(adj.estimate) - std::log(wtd.estimate)));
      const double truth = std::log(it.truth_of(Estimand::marginal_hr));
      adj_bias.push_back(std::log(adj.estimate) - truth);
      wtd_bias.push_back(std::log(wtd.estimate) - truth);
    }
    REQUIRE(diffs.size() > 150);
    CHECK(percentile(diffs, 0.5) < (target == 0.7 ? 0.02 : 0.035));
    // both are unbiased regardless of truncation level
    CHECK(std::abs(sample_mean(adj_bias)) < 0.02);
    CHECK(std::abs(sample_mean(wtd_bias)) < 0.02);
  }
}

TEST_CASE("with almost no delayed entry, naive and adjusted agree") {
  SimScenario s;
  s.beta_entry = 0.0;
  s.target_truncation = 0.21;  // just above p_E: survivors are mostly E = 0
  const double lambda = calibrate_entry_rate(s);
  HarnessOptions opts;
  opts.bootstrap_resamples = 30;

  std::vector<double> diffs;
  for (int i = 0; i < 60; ++i) {
    const IterationResult it = run_iteration(s, lambda, derive_seed(8100, i), opts);
    const auto& naive = it.at(Estimand::marginal_hr, EstimatorKind::naive);
    const auto& adj = it.at(Estimand::marginal_hr, EstimatorKind::adjusted);
    if (naive.failed || adj.failed) continue;
    diffs.push_back(std::abs(std::log(naive.estimate) - std::log(adj.estimate)));
  }
  REQUIRE(diffs.size() > 40);
  CHECK(percentile(diffs, 0.5) < 0.05);
}

TEST_CASE("complete-data conditional fit recovers the treatment effect log(0.8)") {
  SimScenario s;
  const double lambda = calibrate_entry_rate(s);
  CovariateSpec spec;
  spec.arm_indicator = true;
  spec.names = {"z1", "z2"};
  CoxOptions opts;
  opts.risk_set_adjust = false;

  double sum = 0.0;
  const int reps = 1000;
  for (int i = 0; i < reps; ++i) {
    const GeneratedIteration gen =
        generate_iteration(s, lambda, derive_seed(777, i));
    const CoxFit f = fit_cox(gen.complete, spec, std::nullopt, opts);
    sum += f.coefficients[0];
  }
  CHECK(sum / reps == doctest::Approx(std::log(0.8)).epsilon(0.01 / 0.223));
}

TEST_CASE("naive marginal bias grows with truncation severity") {
  HarnessOptions opts;
  opts.bootstrap_resamples = 20;
  std::vector<double> bias, se;
  for (double target : {0.7, 0.5, 0.3}) {  // increasing severity
    SimScenario s;
    s.target_truncation = target;
    ScenarioRun run = run_scenario(s, 200, 31415,
                                   static_cast<std::uint64_t>(target * 10), opts);
    const SummaryCell& cell = run.summary.at(Estimand::marginal_hr, EstimatorKind::naive);
    bias.push_back(std::abs(cell.relative_bias));
    se.push_back(cell.mc_se);
  }
  CHECK(bias[1] >= bias[0] - 2.0 * (se[0] + se[1]));
  CHECK(bias[2] >= bias[1] - 2.0 * (se[1] + se[2]));
}

TEST_CASE("run_scenario is reproducible for a fixed master seed") {
  SimScenario s;
  s.n_rw_expected = 120;
  s.n_trial = 120;
  HarnessOptions opts;
  opts.bootstrap_resamples = 25;
  CalibrationOptions calib;
  calib.n_montecarlo = 50000;

  const ScenarioRun a = run_scenario(s, 12, 999, 3, opts, calib);
  const ScenarioRun b = run_scenario(s, 12, 999, 3, opts, calib);
  CHECK(a.lambda_ebh == b.lambda_ebh);
  for (auto e : {Estimand::conditional_hr, Estimand::marginal_hr, Estimand::rw_median})
    for (auto k : {EstimatorKind::naive, EstimatorKind::adjusted, EstimatorKind::weighted}) {
      if (!estimator_defined(e, k)) continue;
      CHECK(a.summary.at(e, k).relative_bias == b.summary.at(e, k).relative_bias);
      CHECK(same_or_both_nan(a.summary.at(e, k).coverage,
                             b.summary.at(e, k).coverage));
    }
}
