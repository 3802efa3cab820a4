#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ltsurv/cohort.hpp"
#include "ltsurv/cox.hpp"
#include "ltsurv/density_ratio.hpp"
#include "ltsurv/km.hpp"
#include "ltsurv/stats.hpp"

namespace ltsurv {

inline constexpr const char* kVersion = "ltsurv 0.1.0";
inline constexpr int kReportSchemaVersion = 1;

struct AnalysisOptions {
  std::vector<std::string> confounders;
  std::uint64_t seed = 0;
  int bootstrap_resamples = 1000;
  double level = 0.95;
  TieMethod ties = TieMethod::breslow;
  double balance_threshold = 0.1;
  std::optional<double> weight_cap_quantile;
  BootstrapMode bootstrap_mode = BootstrapMode::weighted_resample;
};

struct KMSummaryBlock {
  std::optional<double> median;
  Interval median_ci;
  KMCurve curve;
  ConfidenceBand band;
  int n = 0;
  int n_events = 0;
};

/// End-to-end analysis of a left-truncated cohort against a covariate
/// reference sample: naive and risk-set-adjusted KM, marginal and
/// conditional truncation-dependence tests, density-ratio weights with a
/// balance report, and the weighted adjusted KM with bootstrap intervals.
struct AnalysisReport {
  KMSummaryBlock naive_km;
  KMSummaryBlock adjusted_km;
  KMSummaryBlock weighted_km;
  TestResult marginal_test;
  TestResult conditional_test;
  BalanceReport balance;
  double sample_adjustment = 1.0;
  Eigen::VectorXd weights;
  std::vector<std::string> warnings;

  std::uint64_t seed = 0;
  std::string version;
  std::string config_hash;
};

AnalysisReport run_analyze(const Cohort& truncated,
                           const Eigen::MatrixXd& reference_Z,
                           const AnalysisOptions& options);

std::string report_to_json(const AnalysisReport& report);

/// Write-temp-rename so concurrent readers never observe partial output.
void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace ltsurv
