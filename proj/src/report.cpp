#include "ltsurv/io/report.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "ltsurv/errors.hpp"
#include "ltsurv/io/config.hpp"

namespace ltsurv {

namespace {

using nlohmann::json;

// Rethrow a stage failure with the stage name attached, preserving the
// data/numeric distinction for exit codes.
template <class F>
auto stage(const std::string& name, F&& body) {
  try {
    return body();
  } catch (const DataError& e) {
    throw DataError("[" + name + "] " + e.what());
  } catch (const NumericError& e) {
    throw NumericError("[" + name + "] " + e.what());
  }
}

KMSummaryBlock km_block(const Cohort& cohort, bool adjust,
                        const std::optional<Eigen::VectorXd>& weights,
                        const AnalysisOptions& opts, std::uint64_t stream) {
  KMSummaryBlock block;
  const Eigen::VectorXd w = weights ? *weights : cohort.weights();
  block.curve = fit_km(cohort, adjust, w);
  block.median = median_survival(block.curve);
  block.n = static_cast<int>(cohort.size());
  for (const SurvivalRecord& r : cohort.records())
    if (r.event) ++block.n_events;

  KMBootstrapOptions bo;
  bo.n_resamples = opts.bootstrap_resamples;
  bo.level = opts.level;
  bo.seed = derive_seed(opts.seed, stream);
  bo.statistic = KMStatistic::median;
  bo.mode = opts.bootstrap_mode;
  bo.risk_set_adjust = adjust;
  const KMBootstrapResult boot = km_bootstrap(cohort, w, bo);
  block.median_ci = boot.statistic_ci;
  block.band = boot.band;
  return block;
}

json interval_json(const Interval& ci) { return json::array({ci.lower, ci.upper}); }

json km_json(const KMSummaryBlock& block) {
  json j;
  j["n"] = block.n;
  j["n_events"] = block.n_events;
  if (block.median)
    j["median"] = *block.median;
  else
    j["median"] = nullptr;
  j["median_ci"] = interval_json(block.median_ci);
  j["curve"] = {{"times", block.curve.event_times},
                {"survival", block.curve.survival},
                {"failure_probs", block.curve.failure_probs},
                {"at_risk_mass", block.curve.at_risk_mass},
                {"event_mass", block.curve.n_events_mass},
                {"band_lower", block.band.lower},
                {"band_upper", block.band.upper},
                {"band_level", block.band.level}};
  return j;
}

json test_json(const TestResult& t) {
  return {{"hazard_ratio", t.hazard_ratio}, {"ci_lower", t.ci_lower},
          {"ci_upper", t.ci_upper},         {"p_value", t.p_value},
          {"coefficient", t.coefficient},   {"se", t.se},
          {"adjusted_for", t.adjusted_for}};
}

}  // namespace

AnalysisReport run_analyze(const Cohort& truncated,
                           const Eigen::MatrixXd& reference_Z,
                           const AnalysisOptions& opts) {
  if (opts.confounders.empty())
    throw InvalidArgument("analyze requires at least one confounder");
  if (reference_Z.cols() != static_cast<Eigen::Index>(opts.confounders.size()))
    throw ArityMismatch("reference matrix does not match confounder list");

  AnalysisReport report;
  report.seed = opts.seed;
  report.version = kVersion;

  report.naive_km =
      stage("naive_km", [&] { return km_block(truncated, false, std::nullopt, opts, 1); });
  report.adjusted_km =
      stage("adjusted_km", [&] { return km_block(truncated, true, std::nullopt, opts, 2); });

  CoxOptions cox_opts;
  cox_opts.ties = opts.ties;
  report.marginal_test = stage("marginal_test", [&] {
    return test_marginal_dependence(truncated, opts.level, cox_opts);
  });
  report.conditional_test = stage("conditional_test", [&] {
    return test_conditional_dependence(truncated, opts.confounders, opts.level,
                                       cox_opts);
  });

  const DensityRatioFit dr = stage("weights", [&] {
    DensityRatioOptions dro;
    dro.cap_quantile = opts.weight_cap_quantile;
    dro.balance_threshold = opts.balance_threshold;
    return estimate_weights(truncated.covariate_matrix(opts.confounders),
                            reference_Z, dro, opts.confounders);
  });
  report.weights = dr.weights;
  report.sample_adjustment = dr.sample_adjustment;
  report.balance = dr.balance;
  if (!report.balance.all_balanced())
    report.warnings.push_back(
        "weighted SMD above threshold for at least one confounder");

  report.weighted_km = stage("weighted_km", [&] {
    return km_block(truncated, true, dr.weights, opts, 3);
  });

  json opts_json = {{"confounders", opts.confounders},
                    {"bootstrap_resamples", opts.bootstrap_resamples},
                    {"level", opts.level},
                    {"ties", opts.ties == TieMethod::breslow ? "breslow" : "efron"},
                    {"balance_threshold", opts.balance_threshold},
                    {"bootstrap_mode",
                     opts.bootstrap_mode == BootstrapMode::weighted_resample
                         ? "weighted_resample"
                         : "uniform_keep_weights"},
                    {"weight_cap_quantile",
                     opts.weight_cap_quantile ? json(*opts.weight_cap_quantile)
                                              : json(nullptr)},
                    {"n_truncated", truncated.size()},
                    {"n_reference", reference_Z.rows()}};
  report.config_hash = fnv1a_hex(opts_json.dump());
  return report;
}

std::string report_to_json(const AnalysisReport& report) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["provenance"] = {{"seed", report.seed},
                     {"version", report.version},
                     {"config_hash", report.config_hash}};
  j["naive_km"] = km_json(report.naive_km);
  j["adjusted_km"] = km_json(report.adjusted_km);
  j["weighted_km"] = km_json(report.weighted_km);
  j["marginal_test"] = test_json(report.marginal_test);
  j["conditional_test"] = test_json(report.conditional_test);

  json balance;
  balance["threshold"] = report.balance.threshold;
  balance["all_balanced"] = report.balance.all_balanced();
  json covariates = json::array();
  for (std::size_t k = 0; k < report.balance.covariate_names.size(); ++k)
    covariates.push_back({{"name", report.balance.covariate_names[k]},
                          {"unweighted_smd", report.balance.unweighted_smd[k]},
                          {"weighted_smd", report.balance.weighted_smd[k]},
                          {"balanced", report.balance.weighted_smd[k] <=
                                           report.balance.threshold}});
  balance["covariates"] = covariates;
  j["balance"] = balance;

  j["weights"] = {{"sample_adjustment", report.sample_adjustment},
                  {"values", std::vector<double>(
                                 report.weights.data(),
                                 report.weights.data() + report.weights.size())}};
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

void write_text_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + tmp.string());
    out << content;
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace ltsurv
