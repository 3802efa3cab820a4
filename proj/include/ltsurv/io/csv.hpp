#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "ltsurv/cohort.hpp"

namespace ltsurv {

/// Column-name mapping for cohort CSV files. entry_time, time and event
/// are required; weight and arm are used when present; every other column
/// is read as a covariate. Files are UTF-8, comma-delimited, '.' decimal,
/// header row required, no quoting.
struct CsvSchema {
  std::string entry_time = "entry_time";
  std::string time = "time";
  std::string event = "event";
  std::string weight = "weight";
  std::string arm = "arm";
};

/// Row predicate of the form "<column> <op> <value>" with op one of
/// <, <=, >, >=, ==, !=. Rows failing the predicate are dropped at load.
struct RowFilter {
  enum class Op { lt, le, gt, ge, eq, ne };
  std::string column;
  Op op = Op::le;
  double value = 0.0;

  bool accepts(double x) const;
};

RowFilter parse_row_filter(const std::string& expression);

Cohort load_cohort_csv(const std::string& path, const CsvSchema& schema = {},
                       bool require_truncation_consistency = false,
                       const std::optional<RowFilter>& filter = std::nullopt);

/// Reads only the named columns (for covariate-only reference files).
Eigen::MatrixXd load_covariates_csv(const std::string& path,
                                    const std::vector<std::string>& names,
                                    const std::optional<RowFilter>& filter = std::nullopt);

/// Column names of a CSV header.
std::vector<std::string> csv_column_names(const std::string& path);

void save_cohort_csv(const std::string& path, const Cohort& cohort,
                     const CsvSchema& schema = {});

/// Round-trip double formatting (17 significant digits).
std::string format_double(double x);

}  // namespace ltsurv
