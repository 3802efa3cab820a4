#pragma once

#include <string>
#include <vector>

#include "ltsurv/density_ratio.hpp"

namespace ltsurv {

struct SvgSeries {
  std::string label;
  std::vector<double> times;
  std::vector<double> survival;
  std::vector<double> band_lower;  // empty = no band
  std::vector<double> band_upper;
};

/// Step-function survival curves (with optional pointwise bands) on a
/// fixed [0, 1] vertical scale.
std::string svg_survival_plot(const std::string& title,
                              const std::vector<SvgSeries>& series);

/// Covariate balance dot plot: hollow dots for unweighted SMDs, filled for
/// weighted, dashed line at the balance threshold.
std::string svg_balance_plot(const BalanceReport& balance);

struct SvgLineSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct SvgPanel {
  std::string title;
  std::vector<SvgLineSeries> series;
};

/// Small-multiple line panels with shared axes (used for bias/coverage
/// against truncation probability across grid settings).
std::string svg_panel_plot(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<SvgPanel>& panels, int n_columns,
                           double y_reference);

}  // namespace ltsurv
