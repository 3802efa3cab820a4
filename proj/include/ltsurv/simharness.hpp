#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ltsurv/cohort.hpp"
#include "ltsurv/cox.hpp"
#include "ltsurv/density_ratio.hpp"
#include "ltsurv/errors.hpp"
#include "ltsurv/km.hpp"
#include "ltsurv/rng.hpp"
#include "ltsurv/simgen.hpp"
#include "ltsurv/stats.hpp"

namespace ltsurv {

/// Quantities compared against per-iteration ground truth.
enum class Estimand { conditional_hr, marginal_hr, rw_median };

/// naive ignores delayed entry; adjusted restricts risk sets to entered
/// subjects; weighted additionally reweights the real-world arm toward the
/// trial arm's confounder distribution (not defined for conditional_hr).
enum class EstimatorKind { naive, adjusted, weighted };

inline const char* to_string(Estimand e) {
  switch (e) {
    case Estimand::conditional_hr: return "conditional_hr";
    case Estimand::marginal_hr: return "marginal_hr";
    default: return "rw_median";
  }
}
inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::naive: return "naive";
    case EstimatorKind::adjusted: return "adjusted";
    default: return "weighted";
  }
}

inline bool estimator_defined(Estimand e, EstimatorKind k) {
  return !(e == Estimand::conditional_hr && k == EstimatorKind::weighted);
}

struct EstimatorResult {
  double estimate = std::numeric_limits<double>::quiet_NaN();
  Interval ci;
  bool has_ci = false;
  bool failed = false;
  std::string error;
};

struct IterationResult {
  std::array<double, 3> truth = {std::numeric_limits<double>::quiet_NaN(),
                                 std::numeric_limits<double>::quiet_NaN(),
                                 std::numeric_limits<double>::quiet_NaN()};
  std::array<std::array<EstimatorResult, 3>, 3> cells;

  EstimatorResult& at(Estimand e, EstimatorKind k) {
    return cells[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)];
  }
  const EstimatorResult& at(Estimand e, EstimatorKind k) const {
    return cells[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)];
  }
  double truth_of(Estimand e) const { return truth[static_cast<std::size_t>(e)]; }
};

struct HarnessOptions {
  int bootstrap_resamples = 200;
  double level = 0.95;
  TieMethod ties = TieMethod::breslow;
  // Size and stream of the one-off large complete-data fit that pins each
  // scenario's asymptotic truth (used for coverage).
  int truth_n_per_arm = 150000;
  std::uint64_t truth_seed = 0x7247a9b1ULL;
};

/// Scenario-level ground truths for coverage evaluation. The conditional
/// hazard ratio is exp(beta_trt) by construction; the marginal hazard
/// ratio and the real-world median are the large-sample limits of the
/// complete-data (no truncation) estimators that also define per-iteration
/// truth.
struct ScenarioTruths {
  double conditional_hr = std::numeric_limits<double>::quiet_NaN();
  double marginal_hr = std::numeric_limits<double>::quiet_NaN();
  double rw_median = std::numeric_limits<double>::quiet_NaN();

  double of(Estimand e) const {
    switch (e) {
      case Estimand::conditional_hr: return conditional_hr;
      case Estimand::marginal_hr: return marginal_hr;
      default: return rw_median;
    }
  }
};

namespace detail {

inline CoxOptions cox_opts(const HarnessOptions& h, bool adjust) {
  CoxOptions o;
  o.ties = h.ties;
  o.risk_set_adjust = adjust;
  return o;
}

template <class F>
void capture(EstimatorResult& slot, F&& body) {
  try {
    body();
  } catch (const Error& err) {
    slot.failed = true;
    slot.error = err.what();
  }
}

}  // namespace detail

/// Runs all estimators on one simulated data set. Ground truths are
/// estimated on the complete (pre-truncation) data: Cox(arm, Z1, Z2) for
/// the conditional hazard ratio, Cox(arm) for the marginal hazard ratio,
/// and the Kaplan-Meier median of the complete real-world arm. Wald CIs
/// (robust for the weighted fit) accompany the Cox estimators; the
/// weighted median gets a weighted-bootstrap percentile interval.
/// Estimator failures are recorded per slot, never thrown.
inline IterationResult run_iteration(const SimScenario& scenario,
                                     double lambda_ebh, std::uint64_t seed,
                                     const HarnessOptions& opts = {}) {
  const GeneratedIteration gen =
      generate_iteration(scenario, lambda_ebh, derive_seed(seed, 1));

  IterationResult out;
  const auto truth_idx = [](Estimand e) { return static_cast<std::size_t>(e); };

  CovariateSpec cond_spec;
  cond_spec.arm_indicator = true;
  cond_spec.names = {"z1", "z2"};
  CovariateSpec marg_spec;
  marg_spec.arm_indicator = true;

  const Cohort rw_complete = gen.complete.subset(gen.complete.arm_indices(Arm::truncated));
  const Cohort rw_observed = gen.truncated.subset(gen.truncated.arm_indices(Arm::truncated));

  // Ground truths; complete data has no selection, so entries are ignored.
  bool truth_ok[3] = {true, true, true};
  try {
    const CoxFit f = fit_cox(gen.complete, cond_spec, std::nullopt,
                             detail::cox_opts(opts, false));
    out.truth[truth_idx(Estimand::conditional_hr)] = std::exp(f.coefficients[0]);
  } catch (const Error&) {
    truth_ok[0] = false;
  }
  try {
    const CoxFit f = fit_cox(gen.complete, marg_spec, std::nullopt,
                             detail::cox_opts(opts, false));
    out.truth[truth_idx(Estimand::marginal_hr)] = std::exp(f.coefficients[0]);
  } catch (const Error&) {
    truth_ok[1] = false;
  }
  try {
    const auto med = median_survival(fit_km(rw_complete, false));
    if (!med) throw NumericError("complete-data survival never reaches 0.5");
    out.truth[truth_idx(Estimand::rw_median)] = *med;
  } catch (const Error&) {
    truth_ok[2] = false;
  }

  const auto cox_slot = [&](Estimand estimand, EstimatorKind kind,
                            const CovariateSpec& spec,
                            const std::optional<Eigen::VectorXd>& w, bool adjust) {
    EstimatorResult& slot = out.at(estimand, kind);
    if (!truth_ok[truth_idx(estimand)]) {
      slot.failed = true;
      slot.error = "ground truth unavailable";
      return;
    }
    detail::capture(slot, [&] {
      const CoxFit f =
          fit_cox(gen.truncated, spec, w, detail::cox_opts(opts, adjust));
      const HazardRatioRow row = hazard_ratio_summary(f, opts.level).front();
      slot.estimate = row.hazard_ratio;
      slot.ci = {row.ci_lower, row.ci_upper};
      slot.has_ci = true;
    });
  };

  cox_slot(Estimand::conditional_hr, EstimatorKind::naive, cond_spec, std::nullopt,
           false);
  cox_slot(Estimand::conditional_hr, EstimatorKind::adjusted, cond_spec,
           std::nullopt, true);
  cox_slot(Estimand::marginal_hr, EstimatorKind::naive, marg_spec, std::nullopt,
           false);
  cox_slot(Estimand::marginal_hr, EstimatorKind::adjusted, marg_spec, std::nullopt,
           true);

  // Classifier weights: truncated real-world confounders against the trial
  // arm's. Trial records keep weight 1.
  std::optional<Eigen::VectorXd> rw_weights;
  std::optional<Eigen::VectorXd> combined_weights;
  try {
    const Eigen::MatrixXd trunc_Z = rw_observed.covariate_matrix();
    const Eigen::MatrixXd ref_Z =
        gen.truncated.subset(gen.truncated.arm_indices(Arm::reference))
            .covariate_matrix();
    const DensityRatioFit dr = estimate_weights(trunc_Z, ref_Z);
    rw_weights = dr.weights;
    Eigen::VectorXd cw(gen.truncated.size());
    Eigen::Index next_rw = 0;
    for (Eigen::Index i = 0; i < gen.truncated.size(); ++i)
      cw[i] = gen.truncated[i].arm == Arm::reference ? 1.0 : dr.weights[next_rw++];
    combined_weights = cw;
  } catch (const Error& err) {
    for (Estimand e : {Estimand::marginal_hr, Estimand::rw_median}) {
      EstimatorResult& slot = out.at(e, EstimatorKind::weighted);
      slot.failed = true;
      slot.error = err.what();
    }
  }

  if (combined_weights)
    cox_slot(Estimand::marginal_hr, EstimatorKind::weighted, marg_spec,
             combined_weights, true);

  const auto km_slot = [&](EstimatorKind kind, bool adjust,
                           const std::optional<Eigen::VectorXd>& w, bool with_ci) {
    EstimatorResult& slot = out.at(Estimand::rw_median, kind);
    if (slot.failed) return;
    if (!truth_ok[truth_idx(Estimand::rw_median)]) {
      slot.failed = true;
      slot.error = "ground truth unavailable";
      return;
    }
    detail::capture(slot, [&] {
      const auto med = median_survival(fit_km(rw_observed, adjust, w));
      if (!med) throw NumericError("survival never reaches 0.5");
      slot.estimate = *med;
      if (with_ci) {
        KMBootstrapOptions bo;
        bo.n_resamples = opts.bootstrap_resamples;
        bo.level = opts.level;
        bo.seed = derive_seed(seed, 2);
        bo.statistic = KMStatistic::median;
        slot.ci = km_bootstrap(rw_observed, *w, bo).statistic_ci;
        slot.has_ci = true;
      }
    });
  };

  km_slot(EstimatorKind::naive, false, std::nullopt, false);
  km_slot(EstimatorKind::adjusted, true, std::nullopt, false);
  if (rw_weights) km_slot(EstimatorKind::weighted, true, rw_weights, true);

  return out;
}

/// Pins the scenario's asymptotic truths with one large complete-data
/// draw: Cox(arm) for the marginal HR limit and the (entry-free) KM median
/// of the real-world arm. The conditional HR is exp(beta_trt) exactly.
inline ScenarioTruths oracle_truths(const SimScenario& scenario, double lambda_ebh,
                                    const HarnessOptions& opts = {}) {
  SimScenario big = scenario;
  big.n_rw_expected =
      static_cast<int>(std::lround(opts.truth_n_per_arm * scenario.target_truncation));
  big.n_trial = opts.truth_n_per_arm;
  const GeneratedIteration gen =
      generate_iteration(big, lambda_ebh, opts.truth_seed);

  ScenarioTruths truths;
  truths.conditional_hr = std::exp(scenario.beta_trt);

  CovariateSpec marg;
  marg.arm_indicator = true;
  CoxOptions cox_opts;
  cox_opts.ties = opts.ties;
  cox_opts.risk_set_adjust = false;
  truths.marginal_hr =
      std::exp(fit_cox(gen.complete, marg, std::nullopt, cox_opts).coefficients[0]);

  const Cohort rw = gen.complete.subset(gen.complete.arm_indices(Arm::truncated));
  const auto median = median_survival(fit_km(rw, false));
  if (median) truths.rw_median = *median;
  return truths;
}

/// Aggregates from per-iteration results. relative_bias averages
/// (estimate - truth) / truth against the per-iteration complete-data
/// truth, on the reported scale (hazard ratios for the Cox estimands);
/// log_scale_bias is a diagnostic for the HR estimands. coverage counts
/// CIs containing the scenario-level truth; coverage_iteration_truth is
/// the per-iteration-truth diagnostic (inflated by the correlation between
/// each truncated sample and its own complete data).
struct SummaryCell {
  double relative_bias = std::numeric_limits<double>::quiet_NaN();
  double log_scale_bias = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double coverage_iteration_truth = std::numeric_limits<double>::quiet_NaN();
  double mc_se = std::numeric_limits<double>::quiet_NaN();
  int n_used = 0;
  int n_failures = 0;
  int n_with_ci = 0;
};

struct SimSummary {
  SimScenario scenario;
  double lambda_ebh = 0.0;
  int n_iterations = 0;
  ScenarioTruths truths;
  std::array<std::array<SummaryCell, 3>, 3> cells;

  SummaryCell& at(Estimand e, EstimatorKind k) {
    return cells[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)];
  }
  const SummaryCell& at(Estimand e, EstimatorKind k) const {
    return cells[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)];
  }
};

inline SimSummary summarize(const std::vector<IterationResult>& results,
                            const ScenarioTruths& truths = {}) {
  if (results.empty()) throw InvalidArgument("no iteration results");
  SimSummary summary;
  summary.n_iterations = static_cast<int>(results.size());
  summary.truths = truths;

  for (Estimand e : {Estimand::conditional_hr, Estimand::marginal_hr,
                     Estimand::rw_median}) {
    for (EstimatorKind k :
         {EstimatorKind::naive, EstimatorKind::adjusted, EstimatorKind::weighted}) {
      if (!estimator_defined(e, k)) continue;
      SummaryCell& cell = summary.at(e, k);
      const double scenario_truth = truths.of(e);
      std::vector<double> rel;
      std::vector<double> logdiff;
      int covered_fixed = 0, covered_iter = 0;
      for (const IterationResult& it : results) {
        const EstimatorResult& slot = it.at(e, k);
        const double truth = it.truth_of(e);
        if (slot.failed || !std::isfinite(truth)) {
          ++cell.n_failures;
          continue;
        }
        rel.push_back((slot.estimate - truth) / truth);
        if (e != Estimand::rw_median)
          logdiff.push_back(std::log(slot.estimate) - std::log(truth));
        if (slot.has_ci) {
          ++cell.n_with_ci;
          if (slot.ci.contains(truth)) ++covered_iter;
          if (std::isfinite(scenario_truth) && slot.ci.contains(scenario_truth))
            ++covered_fixed;
        }
      }
      cell.n_used = static_cast<int>(rel.size());
      if (cell.n_used == 0)
        throw AllFailed(std::string(to_string(e)) + "/" + to_string(k));
      cell.relative_bias = sample_mean(rel);
      cell.mc_se = sample_sd(rel) / std::sqrt(static_cast<double>(rel.size()));
      if (!logdiff.empty()) cell.log_scale_bias = sample_mean(logdiff);
      if (cell.n_with_ci > 0) {
        cell.coverage_iteration_truth =
            static_cast<double>(covered_iter) / cell.n_with_ci;
        if (std::isfinite(scenario_truth))
          cell.coverage = static_cast<double>(covered_fixed) / cell.n_with_ci;
      }
    }
  }
  return summary;
}

/// Calibrates the scenario and runs n_iterations with seeds derived from
/// (master_seed, scenario_index, iteration). Aggregation is independent of
/// execution order.
struct ScenarioRun {
  SimSummary summary;
  std::vector<IterationResult> iterations;
  double lambda_ebh = 0.0;
};

inline ScenarioRun run_scenario(const SimScenario& scenario, int n_iterations,
                                std::uint64_t master_seed,
                                std::uint64_t scenario_index = 0,
                                const HarnessOptions& opts = {},
                                const CalibrationOptions& calib = {}) {
  if (n_iterations < 1) throw InvalidArgument("n_iterations must be >= 1");
  ScenarioRun run;
  run.lambda_ebh = calibrate_entry_rate(scenario, calib);
  const ScenarioTruths truths = oracle_truths(scenario, run.lambda_ebh, opts);
  run.iterations.reserve(static_cast<std::size_t>(n_iterations));
  for (int i = 0; i < n_iterations; ++i)
    run.iterations.push_back(
        run_iteration(scenario, run.lambda_ebh,
                      derive_seed(master_seed, scenario_index,
                                  static_cast<std::uint64_t>(i)),
                      opts));
  run.summary = summarize(run.iterations, truths);
  run.summary.scenario = scenario;
  run.summary.lambda_ebh = run.lambda_ebh;
  return run;
}

}  // namespace ltsurv
