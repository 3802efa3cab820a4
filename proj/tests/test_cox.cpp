#include <doctest.h>

#include <cmath>

#include "ltsurv/cox.hpp"
#include "ltsurv/km.hpp"
#include "ltsurv/rng.hpp"
#include "test_support.hpp"

using namespace ltsurv;
using oracle::record;

namespace {

struct RawData {
  Eigen::MatrixXd x;
  Eigen::VectorXd entry, time, weights;
  std::vector<bool> event;
};

RawData make_cox_data(Rng& rng, int n, int p, bool delayed_entry, bool tied_times,
                    bool random_weights) {
  RawData d;
  d.x.resize(n, p);
  d.entry.resize(n);
  d.time.resize(n);
  d.weights.resize(n);
  d.event.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < p; ++k) d.x(i, k) = rng.normal();
    d.entry[i] = delayed_entry && rng.bernoulli(0.4) ? rng.uniform01() * 1.5 : 0.0;
    const double raw = tied_times
                           ? 1.0 + static_cast<double>(rng.uniform_index(6)) * 0.5
                           : 0.05 + rng.exponential(0.5);
    d.time[i] = d.entry[i] + raw;
    d.event[static_cast<std::size_t>(i)] = rng.bernoulli(0.7);
    d.weights[i] = random_weights ? 0.3 + 2.0 * rng.uniform01() : 1.0;
  }
  bool any = false;
  for (bool e : d.event) any = any || e;
  if (!any) d.event[0] = true;
  return d;
}

CoxFit fit(const RawData& d, CoxOptions opts = {}) {
  return fit_cox(d.x, d.entry, d.time, d.event, d.weights, opts);
}

}  // namespace

TEST_CASE("four-subject fit matches the grid-search maximizer of the partial likelihood") {
  const std::vector<double> entry = {0, 0, 0, 0};
  const std::vector<double> time = {1, 2, 3, 4};
  const std::vector<bool> event = {true, true, true, false};
  const std::vector<double> x = {1, 0, 1, 0};
  const std::vector<double> w = {1, 1, 1, 1};

  const double expected = oracle::grid_argmax(
      [&](double b) { return oracle::cox_loglik_1d(entry, time, event, x, w, b); },
      -5.0, 5.0, 1e-4);

  Eigen::MatrixXd X(4, 1);
  X << 1, 0, 1, 0;
  const CoxFit f = fit_cox(X, Eigen::VectorXd::Zero(4),
                           Eigen::Map<const Eigen::VectorXd>(time.data(), 4), event,
                           Eigen::VectorXd::Ones(4));
  CHECK(f.converged);
  CHECK(std::abs(f.coefficients[0] - expected) < 1e-3);
}

TEST_CASE("random small instances match the grid-search oracle") {
  Rng rng(1234);
  int checked = 0;
  while (checked < 12) {
    RawData d = make_cox_data(rng, 2 + static_cast<int>(rng.uniform_index(5)), 1,
                            true, false, false);
    std::vector<double> entry(d.entry.data(), d.entry.data() + d.entry.size());
    std::vector<double> time(d.time.data(), d.time.data() + d.time.size());
    std::vector<double> x(d.x.data(), d.x.data() + d.x.rows());
    std::vector<double> w(d.weights.data(), d.weights.data() + d.weights.size());

    const auto loglik = [&](double b) {
      return oracle::cox_loglik_1d(entry, time, d.event, x, w, b);
    };
    const double oracle_beta = oracle::grid_argmax(loglik, -5.0, 5.0, 1e-4);
    // skip monotone or flat likelihoods (no interior maximizer)
    if (std::abs(oracle_beta) > 4.5) continue;
    if (loglik(oracle_beta) - std::min(loglik(-5.0), loglik(5.0)) < 1e-6) continue;

    const CoxFit f = fit(d);
    CHECK(std::abs(f.coefficients[0] - oracle_beta) < 1e-3);
    ++checked;
  }
}

TEST_CASE("library partial likelihood equals the literal formula (left-open risk sets)") {
  Rng rng(77);
  const RawData d = make_cox_data(rng, 25, 1, true, true, true);
  std::vector<double> entry(d.entry.data(), d.entry.data() + d.entry.size());
  std::vector<double> time(d.time.data(), d.time.data() + d.time.size());
  std::vector<double> x(d.x.data(), d.x.data() + d.x.rows());
  std::vector<double> w(d.weights.data(), d.weights.data() + d.weights.size());

  for (double beta : {-1.0, -0.25, 0.0, 0.7, 2.0}) {
    Eigen::VectorXd b(1);
    b << beta;
    // the library centers covariates; the likelihood is shift-invariant
    const double lib =
        cox_partial_loglik(d.x, d.entry, d.time, d.event, d.weights, b);
    const double lit = oracle::cox_loglik_1d(entry, time, d.event, x, w, beta);
    CHECK(lib == doctest::Approx(lit).epsilon(1e-10));

    CoxOptions efron;
    efron.ties = TieMethod::efron;
    const double lib_e =
        cox_partial_loglik(d.x, d.entry, d.time, d.event, d.weights, b, efron);
    const double lit_e =
        oracle::cox_loglik_1d_efron(entry, time, d.event, x, w, beta);
    CHECK(lib_e == doctest::Approx(lit_e).epsilon(1e-10));
  }
}

TEST_CASE("a subject entering exactly at an event time is excluded from that Cox risk set") {
  // A dies at t=2; B enters exactly at 2. Under the left-open convention
  // B's hazard contributes only to the t=3 event.
  const std::vector<double> entry = {0, 2, 0};
  const std::vector<double> time = {2, 5, 3};
  const std::vector<bool> event = {true, false, true};
  const std::vector<double> x = {1.0, 0.0, 0.5};
  const std::vector<double> w = {1, 1, 1};

  Eigen::MatrixXd X(3, 1);
  X << 1.0, 0.0, 0.5;
  Eigen::VectorXd e(3), t(3);
  e << 0, 2, 0;
  t << 2, 5, 3;
  Eigen::VectorXd beta(1);
  beta << 0.8;

  const double lib = cox_partial_loglik(X, e, t, event, Eigen::VectorXd::Ones(3), beta);
  const double open = oracle::cox_loglik_1d(entry, time, event, x, w, 0.8);
  CHECK(lib == doctest::Approx(open).epsilon(1e-12));

  // closed-convention value differs: B would join the t=2 denominator
  const double closed =
      (0.8 * 1.0 - std::log(std::exp(0.8) + 1.0 + std::exp(0.4))) +
      (0.8 * 0.5 - std::log(std::exp(0.4) + 1.0));
  CHECK(lib != doctest::Approx(closed).epsilon(1e-9));

  // ... while the KM estimator keeps the closed convention at the same boundary.
  const KMCurve km = fit_km(
      validate_cohort({record(0, 2, true), record(2, 5, false)}, {}, false), true);
  CHECK(km.failure_probs[0] == 0.5);
}

TEST_CASE("identically distributed arms give a near-zero coefficient") {
  Rng rng(404);
  const int n = 3000;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd entry = Eigen::VectorXd::Zero(n), time(n);
  std::vector<bool> event(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = i < n / 2 ? 1.0 : 0.0;
    time[i] = 0.01 + rng.exponential(0.1);
    event[static_cast<std::size_t>(i)] = rng.bernoulli(0.6);
  }
  const CoxFit f = fit_cox(X, entry, time, event, Eigen::VectorXd::Ones(n));
  const double se = std::sqrt(f.model_covariance(0, 0));
  CHECK(std::abs(f.coefficients[0]) < 3.0 * se);
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(31337);
  const RawData d = make_cox_data(rng, 60, 3, true, true, true);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd beta(3);
    for (int k = 0; k < 3; ++k) beta[k] = rng.normal(0.0, 0.5);
    for (TieMethod ties : {TieMethod::breslow, TieMethod::efron}) {
      CoxOptions opts;
      opts.ties = ties;
      const Eigen::VectorXd analytic =
          cox_partial_gradient(d.x, d.entry, d.time, d.event, d.weights, beta, opts);
      const Eigen::VectorXd numeric = oracle::central_difference(
          [&](const Eigen::VectorXd& b) {
            return cox_partial_loglik(d.x, d.entry, d.time, d.event, d.weights, b,
                                      opts);
          },
          beta);
      for (int k = 0; k < 3; ++k)
        CHECK(std::abs(analytic[k] - numeric[k]) <
              1e-6 * std::max(1.0, std::abs(analytic[k])));
    }
  }
}

TEST_CASE("score residuals sum to the gradient") {
  Rng rng(909);
  for (TieMethod ties : {TieMethod::breslow, TieMethod::efron}) {
    for (bool inner : {true, false}) {
      const RawData d = make_cox_data(rng, 80, 2, true, true, true);
      Eigen::VectorXd beta(2);
      beta << 0.4, -0.7;
      CoxOptions opts;
      opts.ties = ties;
      opts.inner_weights = inner;
      const Eigen::MatrixXd L =
          cox_score_residuals(d.x, d.entry, d.time, d.event, d.weights, beta, opts);
      const Eigen::VectorXd g =
          cox_partial_gradient(d.x, d.entry, d.time, d.event, d.weights, beta, opts);
      const Eigen::VectorXd sum = L.colwise().sum().transpose();
      for (int k = 0; k < 2; ++k)
        CHECK(sum[k] == doctest::Approx(g[k]).epsilon(1e-8));
    }
  }
}

TEST_CASE("efron equals breslow when no times are tied") {
  Rng rng(515);
  const RawData d = make_cox_data(rng, 50, 2, true, false, true);
  CoxOptions breslow, efron;
  efron.ties = TieMethod::efron;
  const CoxFit a = fit(d, breslow);
  const CoxFit b = fit(d, efron);
  CHECK(a.coefficients[0] == doctest::Approx(b.coefficients[0]).epsilon(1e-10));
  CHECK(a.coefficients[1] == doctest::Approx(b.coefficients[1]).epsilon(1e-10));
}

TEST_CASE("efron fit matches its grid-search maximizer on tied data") {
  const std::vector<double> entry = {0, 0, 0, 0, 0};
  const std::vector<double> time = {1, 1, 2, 2, 3};
  const std::vector<bool> event = {true, true, true, true, true};
  const std::vector<double> x = {1.0, 0.0, 0.5, -0.5, 0.2};
  const std::vector<double> w = {1.2, 0.8, 1.0, 1.5, 0.6};

  const double expected = oracle::grid_argmax(
      [&](double b) {
        return oracle::cox_loglik_1d_efron(entry, time, event, x, w, b);
      },
      -5.0, 5.0, 1e-4);

  Eigen::MatrixXd X(5, 1);
  X << 1.0, 0.0, 0.5, -0.5, 0.2;
  Eigen::VectorXd e = Eigen::VectorXd::Zero(5), t(5), wv(5);
  t << 1, 1, 2, 2, 3;
  wv << 1.2, 0.8, 1.0, 1.5, 0.6;
  CoxOptions opts;
  opts.ties = TieMethod::efron;
  const CoxFit f = fit_cox(X, e, t, event, wv, opts);
  CHECK(std::abs(f.coefficients[0] - expected) < 1e-3);
}

TEST_CASE("coefficients are invariant to weight rescaling") {
  Rng rng(616);
  const RawData d = make_cox_data(rng, 70, 2, true, true, true);
  const CoxFit base = fit(d);

  SUBCASE("power-of-two scales are bitwise identical") {
    for (double c : {0.25, 8.0, 4096.0}) {
      RawData scaled = d;
      scaled.weights = d.weights * c;
      const CoxFit f = fit(scaled);
      CHECK(f.coefficients[0] == base.coefficients[0]);
      CHECK(f.coefficients[1] == base.coefficients[1]);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          CHECK(f.robust_covariance(a, b) == base.robust_covariance(a, b));
    }
  }
  SUBCASE("arbitrary scales agree to rounding error") {
    for (double c : {3.3, 0.07, 919.0}) {
      RawData scaled = d;
      scaled.weights = d.weights * c;
      const CoxFit f = fit(scaled);
      CHECK(f.coefficients[0] == doctest::Approx(base.coefficients[0]).epsilon(1e-10));
      CHECK(f.coefficients[1] == doctest::Approx(base.coefficients[1]).epsilon(1e-10));
      CHECK(f.robust_covariance(0, 0) ==
            doctest::Approx(base.robust_covariance(0, 0)).epsilon(1e-8));
    }
  }
  SUBCASE("model covariance scales by 1/c") {
    RawData scaled = d;
    scaled.weights = d.weights * 4.0;
    const CoxFit f = fit(scaled);
    CHECK(f.model_covariance(0, 0) ==
          doctest::Approx(base.model_covariance(0, 0) / 4.0).epsilon(1e-10));
  }
}

TEST_CASE("observed information is positive definite at the solution") {
  Rng rng(717);
  const RawData d = make_cox_data(rng, 90, 3, true, false, true);
  const CoxFit f = fit(d);
  const Eigen::LLT<Eigen::MatrixXd> llt(f.model_covariance);
  CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("deleting a censored record spanning no event times leaves the fit unchanged") {
  Rng rng(818);
  RawData d = make_cox_data(rng, 40, 1, true, false, false);
  const CoxFit base = fit(d);

  // gap strictly between consecutive event times
  std::vector<double> etimes;
  for (int i = 0; i < 40; ++i)
    if (d.event[static_cast<std::size_t>(i)]) etimes.push_back(d.time[i]);
  std::sort(etimes.begin(), etimes.end());
  REQUIRE(etimes.size() >= 2);
  double lo = 0, hi = 0;
  for (std::size_t j = 0; j + 1 < etimes.size(); ++j)
    if (etimes[j + 1] - etimes[j] > hi - lo) {
      lo = etimes[j];
      hi = etimes[j + 1];
    }
  REQUIRE(hi > lo);

  RawData extended = d;
  const int n = static_cast<int>(d.time.size());
  extended.x.conservativeResize(n + 1, 1);
  extended.entry.conservativeResize(n + 1);
  extended.time.conservativeResize(n + 1);
  extended.weights.conservativeResize(n + 1);
  extended.event.push_back(false);
  extended.x(n, 0) = rng.normal();
  extended.entry[n] = lo + 0.25 * (hi - lo);  // enters and exits between events
  extended.time[n] = lo + 0.75 * (hi - lo);
  extended.weights[n] = 1.0;

  const CoxFit f = fit(extended);
  CHECK(f.coefficients[0] == doctest::Approx(base.coefficients[0]).epsilon(1e-9));
}

TEST_CASE("errors: separation, rank deficiency, missing events") {
  // perfect separation: larger covariate always dies first
  Eigen::MatrixXd X(6, 1);
  X << 6, 5, 4, 3, 2, 1;
  Eigen::VectorXd t(6);
  t << 1, 2, 3, 4, 5, 6;
  const std::vector<bool> all(6, true);
  CHECK_THROWS_AS(
      fit_cox(X, Eigen::VectorXd::Zero(6), t, all, Eigen::VectorXd::Ones(6)),
      MonotoneLikelihood);

  Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(6, 1);
  CHECK_THROWS_AS(
      fit_cox(constant, Eigen::VectorXd::Zero(6), t, all, Eigen::VectorXd::Ones(6)),
      RankDeficientDesign);

  const std::vector<bool> none(6, false);
  CHECK_THROWS_AS(
      fit_cox(X, Eigen::VectorXd::Zero(6), t, none, Eigen::VectorXd::Ones(6)),
      InvalidArgument);
}

TEST_CASE("robust variance: scale-free, matches the stored field, jackknife oracle") {
  // A small dataset on which every delete-one refit converges (verified by
  // the REQUIRE below); the delete-one Cox likelihood is monotone for most
  // tiny configurations, so the draw is fixed.
  Rng rng(25);
  const int n = 8;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd t(n);
  std::vector<bool> event(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.normal();
    t[i] = 0.1 + rng.exponential(0.5);
    event[static_cast<std::size_t>(i)] = rng.bernoulli(0.75);
  }
  const Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);

  const CoxFit f = fit_cox(X, e, t, event, w);
  const Eigen::MatrixXd recomputed = robust_variance(f, X, e, t, event, w);
  CHECK(recomputed(0, 0) == doctest::Approx(f.robust_covariance(0, 0)).epsilon(1e-12));

  double jack = 0.0;
  for (int drop = 0; drop < n; ++drop) {
    Eigen::MatrixXd Xd(n - 1, 1);
    Eigen::VectorXd td(n - 1);
    std::vector<bool> evd;
    int r = 0;
    for (int i = 0; i < n; ++i) {
      if (i == drop) continue;
      Xd(r, 0) = X(i, 0);
      td[r] = t[i];
      evd.push_back(event[static_cast<std::size_t>(i)]);
      ++r;
    }
    const CoxFit fd = fit_cox(Xd, Eigen::VectorXd::Zero(n - 1), td, evd,
                              Eigen::VectorXd::Ones(n - 1));
    REQUIRE(fd.converged);
    jack += std::pow(fd.coefficients[0] - f.coefficients[0], 2);
  }
  const double ratio = f.robust_covariance(0, 0) / jack;
  CHECK(ratio > 0.5);
  CHECK(ratio < 2.0);
}

TEST_CASE("robust and model standard errors agree under a correct unweighted model") {
  Rng rng(1021);
  const int n = 800;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd t(n);
  std::vector<bool> event(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.normal();
    const double rate = 0.2 * std::exp(0.5 * X(i, 0));
    const double death = rng.exponential(rate);
    const double censor = rng.exponential(0.15);
    t[i] = 0.001 + std::min(death, censor);
    event[static_cast<std::size_t>(i)] = death <= censor;
  }
  const CoxFit f =
      fit_cox(X, Eigen::VectorXd::Zero(n), t, event, Eigen::VectorXd::Ones(n));
  const double ratio = std::sqrt(f.robust_covariance(0, 0)) /
                       std::sqrt(f.model_covariance(0, 0));
  CHECK(ratio > 0.8);
  CHECK(ratio < 1.25);
}

TEST_CASE("hazard ratio summaries follow the Wald construction") {
  Rng rng(1122);
  const RawData d = make_cox_data(rng, 60, 1, false, false, false);
  CoxFit f = fit(d);

  SUBCASE("beta = 0 gives HR 1 with a log-symmetric CI") {
    f.coefficients[0] = 0.0;
    const HazardRatioRow row = hazard_ratio_summary(f, 0.95).front();
    CHECK(row.hazard_ratio == 1.0);
    CHECK(row.ci_lower * row.ci_upper == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("textbook numbers") {
    f.coefficients[0] = std::log(0.8);
    f.model_covariance(0, 0) = 0.01;  // SE = 0.1
    f.weighted = false;
    const HazardRatioRow row = hazard_ratio_summary(f, 0.95).front();
    CHECK(row.ci_lower == doctest::Approx(0.8 * std::exp(-0.196)).epsilon(1e-3));
    CHECK(row.ci_upper == doctest::Approx(0.8 * std::exp(0.196)).epsilon(1e-3));
  }
  SUBCASE("p-value at z = 1.96 is 0.05") {
    CHECK(normal_two_sided_p(1.96) == doctest::Approx(0.05).epsilon(1e-3 / 0.05));
  }
}

TEST_CASE("truncation tests validate their inputs") {
  // no delayed entries
  const Cohort flat = validate_cohort(
      {record(0, 1, true, {1.0}), record(0, 2, true, {0.0})}, {"z1"}, true);
  CHECK_THROWS_AS(test_marginal_dependence(flat), InvalidArgument);

  Rng rng(1223);
  std::vector<SurvivalRecord> recs;
  for (int i = 0; i < 50; ++i) {
    const double entry = rng.bernoulli(0.5) ? rng.uniform01() : 0.0;
    recs.push_back(record(entry, entry + 0.05 + rng.exponential(0.5),
                          rng.bernoulli(0.7), {rng.normal()}));
  }
  const Cohort cohort = validate_cohort(recs, {"z1"}, true);
  CHECK_THROWS_AS(test_conditional_dependence(cohort, {"unknown"}),
                  InvalidArgument);
  CHECK_THROWS_AS(test_conditional_dependence(cohort, {}), InvalidArgument);

  const TestResult marginal = test_marginal_dependence(cohort);
  CHECK(marginal.adjusted_for.empty());
  CHECK(marginal.ci_lower <= marginal.hazard_ratio);
  CHECK(marginal.hazard_ratio <= marginal.ci_upper);
  const TestResult conditional = test_conditional_dependence(cohort, {"z1"});
  CHECK(conditional.adjusted_for == std::vector<std::string>{"z1"});
}
