#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ltsurv/cox.hpp"
#include "ltsurv/density_ratio.hpp"
#include "ltsurv/io/config.hpp"
#include "ltsurv/io/csv.hpp"
#include "ltsurv/io/report.hpp"
#include "ltsurv/io/simulate.hpp"
#include "ltsurv/io/svg.hpp"
#include "ltsurv/km.hpp"

namespace {

using nlohmann::json;

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "json";
  bool plots = false;
  int bootstrap_n = 1000;
  std::string ties = "breslow";
  ltsurv::CsvSchema schema;
  bool require_consistency = false;
  std::string filter_expr;

  std::uint64_t seed_or_random() {
    if (!seed) {
      std::random_device rd;
      seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }
    return *seed;
  }
  std::optional<ltsurv::RowFilter> filter() const {
    if (filter_expr.empty()) return std::nullopt;
    return ltsurv::parse_row_filter(filter_expr);
  }
  ltsurv::TieMethod tie_method() const {
    return ties == "efron" ? ltsurv::TieMethod::efron : ltsurv::TieMethod::breslow;
  }
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--seed", opt.seed, "Seed for all randomized steps");
  cmd->add_option("--out", opt.out, "Output file (or directory for analyze/simulate)");
  cmd->add_option("--format", opt.format, "Output format")
      ->check(CLI::IsMember({"json", "csv"}));
  cmd->add_flag("--plots", opt.plots, "Also write SVG plots");
  cmd->add_option("--bootstrap-n", opt.bootstrap_n, "Bootstrap resamples")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--ties", opt.ties, "Cox tie handling")
      ->check(CLI::IsMember({"breslow", "efron"}));
  cmd->add_option("--entry-col", opt.schema.entry_time, "Entry time column name");
  cmd->add_option("--time-col", opt.schema.time, "Observed time column name");
  cmd->add_option("--event-col", opt.schema.event, "Event flag column name");
  cmd->add_option("--weight-col", opt.schema.weight, "Weight column name");
  cmd->add_option("--arm-col", opt.schema.arm, "Arm column name");
  cmd->add_flag("--require-truncation-consistency", opt.require_consistency,
                "Reject records with time <= entry time");
  cmd->add_option("--filter", opt.filter_expr,
                  "Row filter, e.g. 'gap_days <= 90'");
}

void emit(const CommonOptions& opt, const std::string& text) {
  if (opt.out.empty())
    std::cout << text;
  else
    ltsurv::write_text_atomic(opt.out, text);
}

std::vector<std::string> split_names(const std::string& csv) {
  std::vector<std::string> names;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    const auto b = item.find_last_not_of(" \t");
    names.push_back(item.substr(a, b - a + 1));
  }
  return names;
}

json provenance_json(std::optional<std::uint64_t> seed, const std::string& hash) {
  json p = {{"version", ltsurv::kVersion}, {"config_hash", hash}};
  if (seed) p["seed"] = *seed;
  return p;
}

// --- km ----------------------------------------------------------------------

int cmd_km(CommonOptions& opt, const std::string& input, bool naive) {
  const ltsurv::Cohort cohort = ltsurv::load_cohort_csv(
      input, opt.schema, opt.require_consistency, opt.filter());
  const bool adjust = !naive;
  const ltsurv::KMCurve curve = ltsurv::fit_km(cohort, adjust);
  const auto median = ltsurv::median_survival(curve);

  ltsurv::KMBootstrapOptions bo;
  bo.n_resamples = opt.bootstrap_n;
  bo.seed = opt.seed_or_random();
  bo.risk_set_adjust = adjust;
  const ltsurv::KMBootstrapResult boot =
      ltsurv::km_bootstrap(cohort, cohort.weights(), bo);

  if (opt.format == "csv") {
    std::ostringstream out;
    out << "time,at_risk_mass,event_mass,failure_prob,survival,band_lower,band_upper\n";
    for (std::size_t j = 0; j < curve.event_times.size(); ++j)
      out << ltsurv::format_double(curve.event_times[j]) << ','
          << ltsurv::format_double(curve.at_risk_mass[j]) << ','
          << ltsurv::format_double(curve.n_events_mass[j]) << ','
          << ltsurv::format_double(curve.failure_probs[j]) << ','
          << ltsurv::format_double(curve.survival[j]) << ','
          << ltsurv::format_double(boot.band.lower[j]) << ','
          << ltsurv::format_double(boot.band.upper[j]) << '\n';
    emit(opt, out.str());
  } else {
    json j;
    j["provenance"] = provenance_json(opt.seed, "");
    j["risk_set_adjusted"] = adjust;
    j["median"] = median ? json(*median) : json(nullptr);
    j["median_ci"] = {boot.statistic_ci.lower, boot.statistic_ci.upper};
    j["curve"] = {{"times", curve.event_times},
                  {"survival", curve.survival},
                  {"failure_probs", curve.failure_probs},
                  {"at_risk_mass", curve.at_risk_mass},
                  {"event_mass", curve.n_events_mass},
                  {"band_lower", boot.band.lower},
                  {"band_upper", boot.band.upper}};
    emit(opt, j.dump(2) + "\n");
  }
  if (opt.plots) {
    ltsurv::SvgSeries series;
    series.label = adjust ? "risk-set adjusted" : "naive";
    series.times = curve.event_times;
    series.survival = curve.survival;
    series.band_lower = boot.band.lower;
    series.band_upper = boot.band.upper;
    const std::string path = opt.out.empty() ? "km.svg" : opt.out + ".svg";
    ltsurv::write_text_atomic(path,
                              ltsurv::svg_survival_plot("Survival", {series}));
  }
  return 0;
}

// --- cox ---------------------------------------------------------------------

int cmd_cox(CommonOptions& opt, const std::string& input,
            const std::string& covariates, bool arm_indicator,
            bool entry_covariate, bool naive) {
  const ltsurv::Cohort cohort = ltsurv::load_cohort_csv(
      input, opt.schema, opt.require_consistency, opt.filter());
  ltsurv::CovariateSpec spec;
  spec.arm_indicator = arm_indicator;
  spec.entry_time = entry_covariate;
  spec.names = split_names(covariates);

  ltsurv::CoxOptions cox_opts;
  cox_opts.ties = opt.tie_method();
  cox_opts.risk_set_adjust = !naive;
  const ltsurv::CoxFit fit = ltsurv::fit_cox(cohort, spec, std::nullopt, cox_opts);
  const auto rows = ltsurv::hazard_ratio_summary(fit);

  if (opt.format == "csv") {
    std::ostringstream out;
    out << "name,coefficient,se,hazard_ratio,ci_lower,ci_upper,p_value\n";
    for (const auto& r : rows)
      out << r.name << ',' << ltsurv::format_double(r.coefficient) << ','
          << ltsurv::format_double(r.se) << ','
          << ltsurv::format_double(r.hazard_ratio) << ','
          << ltsurv::format_double(r.ci_lower) << ','
          << ltsurv::format_double(r.ci_upper) << ','
          << ltsurv::format_double(r.p_value) << '\n';
    emit(opt, out.str());
  } else {
    json coef = json::array();
    for (const auto& r : rows)
      coef.push_back({{"name", r.name},
                      {"coefficient", r.coefficient},
                      {"se", r.se},
                      {"hazard_ratio", r.hazard_ratio},
                      {"ci_lower", r.ci_lower},
                      {"ci_upper", r.ci_upper},
                      {"p_value", r.p_value}});
    json j = {{"provenance", provenance_json(std::nullopt, "")},
              {"risk_set_adjusted", !naive},
              {"ties", opt.ties},
              {"log_partial_likelihood", fit.log_partial_likelihood},
              {"n_iterations", fit.n_iterations},
              {"converged", fit.converged},
              {"robust_se_used", fit.weighted},
              {"coefficients", coef}};
    emit(opt, j.dump(2) + "\n");
  }
  return 0;
}

// --- test-truncation -----------------------------------------------------------

json test_to_json(const ltsurv::TestResult& t) {
  return {{"hazard_ratio", t.hazard_ratio}, {"ci_lower", t.ci_lower},
          {"ci_upper", t.ci_upper},         {"p_value", t.p_value},
          {"coefficient", t.coefficient},   {"se", t.se},
          {"adjusted_for", t.adjusted_for}};
}

int cmd_test(CommonOptions& opt, const std::string& input, bool conditional,
             const std::string& confounders) {
  const ltsurv::Cohort cohort = ltsurv::load_cohort_csv(
      input, opt.schema, opt.require_consistency, opt.filter());
  ltsurv::CoxOptions cox_opts;
  cox_opts.ties = opt.tie_method();
  const ltsurv::TestResult result =
      conditional
          ? ltsurv::test_conditional_dependence(cohort, split_names(confounders),
                                                0.95, cox_opts)
          : ltsurv::test_marginal_dependence(cohort, 0.95, cox_opts);
  if (opt.format == "csv") {
    std::ostringstream out;
    out << "hazard_ratio,ci_lower,ci_upper,p_value,coefficient,se,adjusted_for\n"
        << ltsurv::format_double(result.hazard_ratio) << ','
        << ltsurv::format_double(result.ci_lower) << ','
        << ltsurv::format_double(result.ci_upper) << ','
        << ltsurv::format_double(result.p_value) << ','
        << ltsurv::format_double(result.coefficient) << ','
        << ltsurv::format_double(result.se) << ',';
    for (std::size_t i = 0; i < result.adjusted_for.size(); ++i)
      out << (i ? ";" : "") << result.adjusted_for[i];
    out << '\n';
    emit(opt, out.str());
  } else {
    json j = test_to_json(result);
    j["provenance"] = provenance_json(std::nullopt, "");
    emit(opt, j.dump(2) + "\n");
  }
  return 0;
}

// --- weights / balance ---------------------------------------------------------

int cmd_weights(CommonOptions& opt, const std::string& truncated_path,
                const std::string& reference_path, const std::string& confounders,
                std::optional<double> cap) {
  const std::vector<std::string> names = split_names(confounders);
  const ltsurv::Cohort truncated = ltsurv::load_cohort_csv(
      truncated_path, opt.schema, opt.require_consistency, opt.filter());
  const Eigen::MatrixXd ref =
      ltsurv::load_covariates_csv(reference_path, names, opt.filter());

  ltsurv::DensityRatioOptions dro;
  dro.cap_quantile = cap;
  const ltsurv::DensityRatioFit fit = ltsurv::estimate_weights(
      truncated.covariate_matrix(names), ref, dro, names);

  if (opt.format == "csv") {
    std::ostringstream out;
    out << "weight\n";
    for (Eigen::Index i = 0; i < fit.weights.size(); ++i)
      out << ltsurv::format_double(fit.weights[i]) << '\n';
    emit(opt, out.str());
  } else {
    json j;
    j["provenance"] = provenance_json(std::nullopt, "");
    j["sample_adjustment"] = fit.sample_adjustment;
    j["classifier"] = {
        {"coefficients",
         std::vector<double>(fit.model.coefficients.data(),
                             fit.model.coefficients.data() +
                                 fit.model.coefficients.size())},
        {"converged", fit.model.converged},
        {"n_iterations", fit.model.n_iterations}};
    j["weights"] = std::vector<double>(fit.weights.data(),
                                       fit.weights.data() + fit.weights.size());
    json balance = json::array();
    for (std::size_t k = 0; k < fit.balance.covariate_names.size(); ++k)
      balance.push_back({{"name", fit.balance.covariate_names[k]},
                         {"unweighted_smd", fit.balance.unweighted_smd[k]},
                         {"weighted_smd", fit.balance.weighted_smd[k]}});
    j["balance"] = balance;
    emit(opt, j.dump(2) + "\n");
  }
  return 0;
}

int cmd_balance(CommonOptions& opt, const std::string& truncated_path,
                const std::string& reference_path, const std::string& confounders,
                const std::string& weights_file, double threshold) {
  const std::vector<std::string> names = split_names(confounders);
  const ltsurv::Cohort truncated = ltsurv::load_cohort_csv(
      truncated_path, opt.schema, opt.require_consistency, opt.filter());
  const Eigen::MatrixXd ref =
      ltsurv::load_covariates_csv(reference_path, names, opt.filter());

  Eigen::VectorXd weights = Eigen::VectorXd::Ones(truncated.size());
  if (!weights_file.empty()) {
    const Eigen::MatrixXd w =
        ltsurv::load_covariates_csv(weights_file, {"weight"}, std::nullopt);
    weights = w.col(0);
  }
  const ltsurv::BalanceReport report = ltsurv::balance_report(
      truncated.covariate_matrix(names), ref, weights, threshold, names);

  if (opt.format == "csv") {
    std::ostringstream out;
    out << "name,unweighted_smd,weighted_smd,balanced\n";
    for (std::size_t k = 0; k < report.covariate_names.size(); ++k)
      out << report.covariate_names[k] << ','
          << ltsurv::format_double(report.unweighted_smd[k]) << ','
          << ltsurv::format_double(report.weighted_smd[k]) << ','
          << (report.weighted_smd[k] <= threshold ? 1 : 0) << '\n';
    emit(opt, out.str());
  } else {
    json cov = json::array();
    for (std::size_t k = 0; k < report.covariate_names.size(); ++k)
      cov.push_back({{"name", report.covariate_names[k]},
                     {"unweighted_smd", report.unweighted_smd[k]},
                     {"weighted_smd", report.weighted_smd[k]},
                     {"balanced", report.weighted_smd[k] <= threshold}});
    json j = {{"provenance", provenance_json(std::nullopt, "")},
              {"threshold", threshold},
              {"all_balanced", report.all_balanced()},
              {"covariates", cov}};
    emit(opt, j.dump(2) + "\n");
  }
  if (opt.plots) {
    const std::string path = opt.out.empty() ? "balance.svg" : opt.out + ".svg";
    ltsurv::write_text_atomic(path, ltsurv::svg_balance_plot(report));
  }
  return 0;
}

// --- analyze -------------------------------------------------------------------

int cmd_analyze(CommonOptions& opt, const std::string& truncated_path,
                const std::string& reference_path, const std::string& confounders,
                double threshold, std::optional<double> cap) {
  const std::vector<std::string> names = split_names(confounders);
  if (names.empty()) throw ltsurv::InvalidArgument("--confounders is required");

  const ltsurv::Cohort truncated = ltsurv::load_cohort_csv(
      truncated_path, opt.schema, opt.require_consistency, opt.filter());
  // Fail fast on the reference columns before any fitting.
  const Eigen::MatrixXd ref =
      ltsurv::load_covariates_csv(reference_path, names, opt.filter());

  ltsurv::AnalysisOptions aopts;
  aopts.confounders = names;
  aopts.seed = opt.seed_or_random();
  aopts.bootstrap_resamples = opt.bootstrap_n;
  aopts.ties = opt.tie_method();
  aopts.balance_threshold = threshold;
  aopts.weight_cap_quantile = cap;

  const ltsurv::AnalysisReport report = ltsurv::run_analyze(truncated, ref, aopts);

  namespace fs = std::filesystem;
  const fs::path out_dir = opt.out.empty() ? "analysis_out" : opt.out;
  ltsurv::write_text_atomic((out_dir / "report.json").string(),
                            ltsurv::report_to_json(report));
  if (opt.plots) {
    const auto series = [&](const char* label, const ltsurv::KMSummaryBlock& b) {
      ltsurv::SvgSeries s;
      s.label = label;
      s.times = b.curve.event_times;
      s.survival = b.curve.survival;
      s.band_lower = b.band.lower;
      s.band_upper = b.band.upper;
      return s;
    };
    ltsurv::write_text_atomic(
        (out_dir / "survival.svg").string(),
        ltsurv::svg_survival_plot(
            "Survival under left truncation",
            {series("naive", report.naive_km),
             series("risk-set adjusted", report.adjusted_km),
             series("weighted adjusted", report.weighted_km)}));
    ltsurv::write_text_atomic((out_dir / "balance.svg").string(),
                              ltsurv::svg_balance_plot(report.balance));
  }
  std::cerr << "report written to " << (out_dir / "report.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Survival estimation under conditionally independent left truncation"};
  app.require_subcommand(1);

  CommonOptions km_opt, cox_opt, test_opt, weights_opt, balance_opt, analyze_opt,
      sim_opt;

  // km
  auto* km = app.add_subcommand("km", "Risk-set-adjusted Kaplan-Meier curve");
  std::string km_input;
  bool km_naive = false;
  km->add_option("--input", km_input, "Cohort CSV")->required();
  km->add_flag("--naive", km_naive, "Ignore delayed entry");
  add_common(km, km_opt);

  // cox
  auto* cox = app.add_subcommand("cox", "Cox proportional hazards fit");
  std::string cox_input, cox_covariates;
  bool cox_arm = false, cox_entry = false, cox_naive = false;
  cox->add_option("--input", cox_input, "Cohort CSV")->required();
  cox->add_option("--covariates", cox_covariates, "Comma-separated covariates");
  cox->add_flag("--arm-indicator", cox_arm, "Include reference-arm indicator");
  cox->add_flag("--entry-covariate", cox_entry, "Include entry time as covariate");
  cox->add_flag("--naive", cox_naive, "Ignore delayed entry");
  add_common(cox, cox_opt);

  // test-truncation
  auto* test = app.add_subcommand("test-truncation",
                                  "Test for dependent left truncation");
  std::string test_input, test_confounders;
  bool test_conditional = false;
  test->add_option("--input", test_input, "Cohort CSV")->required();
  test->add_flag("--conditional", test_conditional,
                 "Adjust for confounders (conditional test)");
  test->add_option("--confounders", test_confounders,
                   "Comma-separated confounders for --conditional");
  add_common(test, test_opt);

  // weights
  auto* weights = app.add_subcommand("weights",
                                     "Density-ratio weights from a reference sample");
  std::string w_trunc, w_ref, w_conf;
  std::optional<double> w_cap;
  weights->add_option("--truncated", w_trunc, "Truncated cohort CSV")->required();
  weights->add_option("--reference", w_ref, "Reference CSV (confounder columns)")
      ->required();
  weights->add_option("--confounders", w_conf, "Comma-separated confounders")
      ->required();
  weights->add_option("--cap-quantile", w_cap,
                      "Cap weights at this quantile (e.g. 0.99)");
  add_common(weights, weights_opt);

  // balance
  auto* balance = app.add_subcommand("balance", "Standardized mean differences");
  std::string b_trunc, b_ref, b_conf, b_weights;
  double b_threshold = 0.1;
  balance->add_option("--truncated", b_trunc, "Truncated cohort CSV")->required();
  balance->add_option("--reference", b_ref, "Reference CSV")->required();
  balance->add_option("--confounders", b_conf, "Comma-separated confounders")
      ->required();
  balance->add_option("--weights-file", b_weights,
                      "CSV with a 'weight' column per truncated record");
  balance->add_option("--threshold", b_threshold, "Balance threshold");
  add_common(balance, balance_opt);

  // analyze
  auto* analyze = app.add_subcommand(
      "analyze", "End-to-end truncation-aware survival analysis");
  std::string a_trunc, a_ref, a_conf;
  double a_threshold = 0.1;
  std::optional<double> a_cap;
  analyze->add_option("--truncated", a_trunc, "Truncated cohort CSV")->required();
  analyze->add_option("--reference", a_ref, "Reference CSV (confounder columns)")
      ->required();
  analyze->add_option("--confounders", a_conf, "Comma-separated confounders")
      ->required();
  analyze->add_option("--balance-threshold", a_threshold, "Balance threshold");
  analyze->add_option("--cap-quantile", a_cap, "Weight cap quantile");
  add_common(analyze, analyze_opt);
  analyze_opt.require_consistency = true;  // records must satisfy Y > E

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run the simulation study grid");
  std::string s_config, s_out = "simulation_out";
  int s_threads = 0;
  bool s_plots = false, s_progress = false;
  simulate->add_option("--config", s_config, "Simulation config JSON");
  simulate->add_option("--out", s_out, "Output directory");
  simulate->add_flag("--plots", s_plots, "Write bias/coverage SVG plots");
  simulate->add_option("--threads", s_threads, "Worker threads (0 = auto)");
  simulate->add_flag("--progress", s_progress, "Print per-scenario progress");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    if (km->parsed()) return cmd_km(km_opt, km_input, km_naive);
    if (cox->parsed())
      return cmd_cox(cox_opt, cox_input, cox_covariates, cox_arm, cox_entry,
                     cox_naive);
    if (test->parsed())
      return cmd_test(test_opt, test_input, test_conditional, test_confounders);
    if (weights->parsed())
      return cmd_weights(weights_opt, w_trunc, w_ref, w_conf, w_cap);
    if (balance->parsed())
      return cmd_balance(balance_opt, b_trunc, b_ref, b_conf, b_weights,
                         b_threshold);
    if (analyze->parsed())
      return cmd_analyze(analyze_opt, a_trunc, a_ref, a_conf, a_threshold, a_cap);
    if (simulate->parsed()) {
      const ltsurv::SimConfig config = s_config.empty()
                                           ? ltsurv::SimConfig{}
                                           : ltsurv::load_sim_config(s_config);
      const ltsurv::GridRunResult result =
          ltsurv::run_grid(config, s_out, s_plots, s_threads, s_progress);
      std::cerr << "wrote " << result.summaries.size() << " scenario summaries to "
                << s_out << " (" << result.n_resumed << " resumed)\n";
      return 0;
    }
  } catch (const ltsurv::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ltsurv::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
