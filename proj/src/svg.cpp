#include "ltsurv/io/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ltsurv {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string num(double x) {
  std::ostringstream s;
  s.precision(6);
  s << x;
  return s.str();
}

// Round an axis span to 1/2/5 * 10^k tick spacing.
double nice_step(double span, int target_ticks) {
  const double raw = span / std::max(1, target_ticks);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

struct Frame {
  double x0, y0, w, h;        // pixel box
  double xmin, xmax, ymin, ymax;
  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

void draw_axes(std::ostringstream& svg, const Frame& f, const std::string& x_label,
               const std::string& y_label, bool y_percent_style) {
  svg << "<rect x='" << f.x0 << "' y='" << f.y0 << "' width='" << f.w
      << "' height='" << f.h << "' fill='none' stroke='#888'/>\n";
  const double xstep = nice_step(f.xmax - f.xmin, 6);
  for (double t = std::ceil(f.xmin / xstep) * xstep; t <= f.xmax + 1e-9; t += xstep) {
    svg << "<line x1='" << f.px(t) << "' y1='" << f.y0 + f.h << "' x2='" << f.px(t)
        << "' y2='" << f.y0 + f.h + 4 << "' stroke='#555'/>\n"
        << "<text x='" << f.px(t) << "' y='" << f.y0 + f.h + 16
        << "' font-size='10' text-anchor='middle'>" << num(t) << "</text>\n";
  }
  const double ystep = nice_step(f.ymax - f.ymin, y_percent_style ? 5 : 5);
  for (double t = std::ceil(f.ymin / ystep) * ystep; t <= f.ymax + 1e-9; t += ystep) {
    svg << "<line x1='" << f.x0 - 4 << "' y1='" << f.py(t) << "' x2='" << f.x0
        << "' y2='" << f.py(t) << "' stroke='#555'/>\n"
        << "<text x='" << f.x0 - 7 << "' y='" << f.py(t) + 3
        << "' font-size='10' text-anchor='end'>" << num(t) << "</text>\n";
  }
  svg << "<text x='" << f.x0 + f.w / 2 << "' y='" << f.y0 + f.h + 32
      << "' font-size='11' text-anchor='middle'>" << x_label << "</text>\n";
  svg << "<text x='" << f.x0 - 40 << "' y='" << f.y0 + f.h / 2
      << "' font-size='11' text-anchor='middle' transform='rotate(-90 "
      << f.x0 - 40 << " " << f.y0 + f.h / 2 << ")'>" << y_label << "</text>\n";
}

// Step-polyline points for a survival curve starting at (0, 1).
std::string step_points(const Frame& f, const std::vector<double>& t,
                        const std::vector<double>& s, bool reversed) {
  std::vector<std::pair<double, double>> pts;
  pts.emplace_back(0.0, 1.0);
  for (std::size_t j = 0; j < t.size(); ++j) {
    pts.emplace_back(t[j], j == 0 ? 1.0 : s[j - 1]);
    pts.emplace_back(t[j], s[j]);
  }
  pts.emplace_back(f.xmax, s.empty() ? 1.0 : s.back());
  if (reversed) std::reverse(pts.begin(), pts.end());
  std::ostringstream out;
  for (const auto& [x, y] : pts) out << f.px(x) << ',' << f.py(y) << ' ';
  return out.str();
}

}  // namespace

std::string svg_survival_plot(const std::string& title,
                              const std::vector<SvgSeries>& series) {
  double tmax = 1.0;
  for (const SvgSeries& s : series)
    if (!s.times.empty()) tmax = std::max(tmax, s.times.back());

  Frame f{55, 35, 500, 380, 0.0, tmax * 1.02, 0.0, 1.0};
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='720' height='470' "
         "viewBox='0 0 720 470'>\n"
      << "<rect width='720' height='470' fill='white'/>\n"
      << "<text x='305' y='20' font-size='13' text-anchor='middle'>" << title
      << "</text>\n";
  draw_axes(svg, f, "time", "survival probability", true);

  for (std::size_t k = 0; k < series.size(); ++k) {
    const SvgSeries& s = series[k];
    const char* color = kPalette[k % kPaletteSize];
    if (!s.band_lower.empty() && s.band_lower.size() == s.times.size()) {
      svg << "<polygon points='" << step_points(f, s.times, s.band_upper, false)
          << step_points(f, s.times, s.band_lower, true) << "' fill='" << color
          << "' fill-opacity='0.15' stroke='none'/>\n";
    }
    svg << "<polyline points='" << step_points(f, s.times, s.survival, false)
        << "' fill='none' stroke='" << color << "' stroke-width='1.6'/>\n";
    const double ly = 50.0 + 18.0 * static_cast<double>(k);
    svg << "<line x1='570' y1='" << ly << "' x2='595' y2='" << ly << "' stroke='"
        << color << "' stroke-width='2'/>\n"
        << "<text x='600' y='" << ly + 4 << "' font-size='11'>" << s.label
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string svg_balance_plot(const BalanceReport& balance) {
  const auto n = balance.covariate_names.size();
  double smax = balance.threshold;
  for (double v : balance.unweighted_smd)
    if (std::isfinite(v)) smax = std::max(smax, v);
  for (double v : balance.weighted_smd)
    if (std::isfinite(v)) smax = std::max(smax, v);

  const double row_h = 26.0;
  const double height = 90.0 + row_h * static_cast<double>(n);
  Frame f{140, 45, 440, row_h * static_cast<double>(n), 0.0, smax * 1.15, 0.0,
          static_cast<double>(n)};

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='720' height='" << height
      << "' viewBox='0 0 720 " << height << "'>\n"
      << "<rect width='720' height='" << height << "' fill='white'/>\n"
      << "<text x='360' y='20' font-size='13' text-anchor='middle'>"
      << "Covariate balance (absolute standardized mean differences)</text>\n";
  draw_axes(svg, f, "absolute SMD", "", false);

  svg << "<line x1='" << f.px(balance.threshold) << "' y1='" << f.y0 << "' x2='"
      << f.px(balance.threshold) << "' y2='" << f.y0 + f.h
      << "' stroke='#444' stroke-dasharray='5,4'/>\n";

  for (std::size_t k = 0; k < n; ++k) {
    const double cy = f.py(static_cast<double>(n - k) - 0.5);
    svg << "<text x='" << f.x0 - 8 << "' y='" << cy + 4
        << "' font-size='11' text-anchor='end'>" << balance.covariate_names[k]
        << "</text>\n";
    const auto dot = [&](double v, bool filled) {
      if (!std::isfinite(v)) v = f.xmax;
      svg << "<circle cx='" << f.px(std::min(v, f.xmax)) << "' cy='" << cy
          << "' r='5' stroke='" << kPalette[filled ? 1 : 0] << "' fill='"
          << (filled ? kPalette[1] : "white") << "' stroke-width='1.5'/>\n";
    };
    dot(balance.unweighted_smd[k], false);
    dot(balance.weighted_smd[k], true);
  }
  svg << "<circle cx='600' cy='40' r='5' stroke='" << kPalette[0]
      << "' fill='white' stroke-width='1.5'/>"
      << "<text x='610' y='44' font-size='11'>unweighted</text>\n"
      << "<circle cx='600' cy='58' r='5' stroke='" << kPalette[1] << "' fill='"
      << kPalette[1] << "'/><text x='610' y='62' font-size='11'>weighted</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::string svg_panel_plot(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<SvgPanel>& panels, int n_columns,
                           double y_reference) {
  double xmin = 1e300, xmax = -1e300, ymin = y_reference, ymax = y_reference;
  std::vector<std::string> labels;
  for (const SvgPanel& p : panels)
    for (const SvgLineSeries& s : p.series) {
      if (std::find(labels.begin(), labels.end(), s.label) == labels.end())
        labels.push_back(s.label);
      for (double v : s.x) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
      for (double v : s.y)
        if (std::isfinite(v)) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
    }
  if (!(xmax > xmin)) { xmin -= 0.5; xmax += 0.5; }
  const double pad = 0.08 * (ymax - ymin + 1e-12);
  ymin -= pad;
  ymax += pad;

  const int ncol = std::max(1, n_columns);
  const int nrow = (static_cast<int>(panels.size()) + ncol - 1) / ncol;
  const double pw = 210, ph = 160, gap = 38;
  const double width = 80 + ncol * (pw + gap);
  const double height = 90 + nrow * (ph + gap);

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "' viewBox='0 0 " << width << ' ' << height
      << "'>\n<rect width='" << width << "' height='" << height
      << "' fill='white'/>\n"
      << "<text x='" << width / 2 << "' y='22' font-size='14' text-anchor='middle'>"
      << title << "</text>\n";

  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double lx = 80.0 + 130.0 * static_cast<double>(k);
    svg << "<line x1='" << lx << "' y1='40' x2='" << lx + 22 << "' y2='40' stroke='"
        << kPalette[k % kPaletteSize] << "' stroke-width='2'/>\n"
        << "<text x='" << lx + 27 << "' y='44' font-size='11'>" << labels[k]
        << "</text>\n";
  }

  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const int r = static_cast<int>(pi) / ncol;
    const int c = static_cast<int>(pi) % ncol;
    Frame f{70 + c * (pw + gap), 70 + r * (ph + gap), pw, ph, xmin, xmax, ymin, ymax};
    svg << "<text x='" << f.x0 + f.w / 2 << "' y='" << f.y0 - 6
        << "' font-size='11' text-anchor='middle'>" << panels[pi].title
        << "</text>\n";
    draw_axes(svg, f, x_label, c == 0 ? y_label : "", false);
    svg << "<line x1='" << f.x0 << "' y1='" << f.py(y_reference) << "' x2='"
        << f.x0 + f.w << "' y2='" << f.py(y_reference)
        << "' stroke='#bbb' stroke-dasharray='4,3'/>\n";
    for (const SvgLineSeries& s : panels[pi].series) {
      std::size_t color_idx = 0;
      for (std::size_t k = 0; k < labels.size(); ++k)
        if (labels[k] == s.label) color_idx = k;
      std::ostringstream pts;
      for (std::size_t j = 0; j < s.x.size(); ++j)
        if (std::isfinite(s.y[j])) pts << f.px(s.x[j]) << ',' << f.py(s.y[j]) << ' ';
      svg << "<polyline points='" << pts.str() << "' fill='none' stroke='"
          << kPalette[color_idx % kPaletteSize] << "' stroke-width='1.6'/>\n";
      for (std::size_t j = 0; j < s.x.size(); ++j)
        if (std::isfinite(s.y[j]))
          svg << "<circle cx='" << f.px(s.x[j]) << "' cy='" << f.py(s.y[j])
              << "' r='2.3' fill='" << kPalette[color_idx % kPaletteSize]
              << "'/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace ltsurv
