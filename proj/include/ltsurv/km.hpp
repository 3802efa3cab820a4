#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ltsurv/cohort.hpp"
#include "ltsurv/errors.hpp"
#include "ltsurv/rng.hpp"
#include "ltsurv/stats.hpp"

namespace ltsurv {

/// Risk-set-adjusted (weighted) Kaplan-Meier curve. At each distinct event
/// time x_j the conditional failure probability is
///
///   F(x_j) = sum_i I(E_i <= x_j, Y_i = x_j) delta_i w_i
///          / sum_i I(E_i <= x_j <= Y_i) w_i
///
/// and survival[k] = prod_{j<=k} (1 - F(x_j)). at_risk_mass and
/// n_events_mass are reported on a max-normalized weight scale, so curves
/// are invariant to rescaling all weights by a common factor.
struct KMCurve {
  std::vector<double> event_times;
  std::vector<double> failure_probs;
  std::vector<double> survival;
  std::vector<double> at_risk_mass;
  std::vector<double> n_events_mass;
};

namespace detail {

inline void check_weights(const Eigen::VectorXd& w, Eigen::Index n) {
  if (w.size() != n)
    throw InvalidArgument("weight vector length " + std::to_string(w.size()) +
                          " does not match cohort size " + std::to_string(n));
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(w[i] > 0.0) || !std::isfinite(w[i]))
      throw InvalidArgument("weights must be positive and finite");
}

}  // namespace detail

/// Core estimator on raw arrays. Entry times participate only when
/// risk_set_adjust is set; otherwise every subject is at risk from time 0.
inline KMCurve fit_km(const Eigen::VectorXd& entry, const Eigen::VectorXd& time,
                      const std::vector<bool>& event, Eigen::VectorXd weights,
                      bool risk_set_adjust = true) {
  const Eigen::Index n = time.size();
  if (n == 0) throw EmptyCohort();
  if (entry.size() != n || static_cast<Eigen::Index>(event.size()) != n)
    throw InvalidArgument("fit_km: input lengths disagree");
  detail::check_weights(weights, n);

  // Weights enter only through ratios; dividing by the maximum makes the
  // curve exactly invariant under power-of-two rescalings and keeps unit
  // weights equal to plain counts.
  weights /= weights.maxCoeff();

  std::vector<double> x;  // distinct event times
  for (Eigen::Index i = 0; i < n; ++i)
    if (event[static_cast<std::size_t>(i)]) x.push_back(time[i]);
  std::sort(x.begin(), x.end());
  x.erase(std::unique(x.begin(), x.end()), x.end());

  KMCurve curve;
  curve.event_times = x;
  if (x.empty()) return curve;

  std::vector<Eigen::Index> by_entry(static_cast<std::size_t>(n));
  std::iota(by_entry.begin(), by_entry.end(), 0);
  std::vector<Eigen::Index> by_exit = by_entry;
  const auto entry_of = [&](Eigen::Index i) {
    return risk_set_adjust ? entry[i] : 0.0;
  };
  std::sort(by_entry.begin(), by_entry.end(),
            [&](Eigen::Index a, Eigen::Index b) { return entry_of(a) < entry_of(b); });
  std::sort(by_exit.begin(), by_exit.end(),
            [&](Eigen::Index a, Eigen::Index b) { return time[a] < time[b]; });

  // Event mass grouped by exact failure time.
  std::vector<Eigen::Index> events_by_time;
  for (Eigen::Index i = 0; i < n; ++i)
    if (event[static_cast<std::size_t>(i)]) events_by_time.push_back(i);
  std::sort(events_by_time.begin(), events_by_time.end(),
            [&](Eigen::Index a, Eigen::Index b) { return time[a] < time[b]; });

  std::size_t p_in = 0, p_out = 0, p_ev = 0;
  double mass_in = 0.0, mass_out = 0.0, surv = 1.0;
  curve.failure_probs.reserve(x.size());
  curve.survival.reserve(x.size());
  curve.at_risk_mass.reserve(x.size());
  curve.n_events_mass.reserve(x.size());

  for (double t : x) {
    while (p_in < by_entry.size() && entry_of(by_entry[p_in]) <= t)
      mass_in += weights[by_entry[p_in++]];
    while (p_out < by_exit.size() && time[by_exit[p_out]] < t)
      mass_out += weights[by_exit[p_out++]];
    const double at_risk = mass_in - mass_out;

    double event_mass = 0.0;
    while (p_ev < events_by_time.size() && time[events_by_time[p_ev]] == t) {
      const Eigen::Index i = events_by_time[p_ev++];
      if (entry_of(i) <= t) event_mass += weights[i];
    }

    if (!(at_risk > 0.0)) throw ZeroRiskMass(t);
    // The sweep accumulates the denominator incrementally, so a full-mass
    // event time can land a rounding step above 1.
    const double failure = std::min(event_mass / at_risk, 1.0);
    surv *= 1.0 - failure;
    curve.failure_probs.push_back(failure);
    curve.survival.push_back(surv);
    curve.at_risk_mass.push_back(at_risk);
    curve.n_events_mass.push_back(event_mass);
  }
  return curve;
}

/// Cohort-level wrapper. An explicit weight vector overrides the per-record
/// weights.
inline KMCurve fit_km(const Cohort& cohort, bool risk_set_adjust = true,
                      const std::optional<Eigen::VectorXd>& weights = std::nullopt) {
  return fit_km(cohort.entry_times(), cohort.observed_times(),
                cohort.event_flags(), weights ? *weights : cohort.weights(),
                risk_set_adjust);
}

/// Right-continuous step evaluation: survival just after time t (1 before
/// the first event time).
inline double survival_at(const KMCurve& curve, double t) {
  double s = 1.0;
  for (std::size_t j = 0; j < curve.event_times.size(); ++j) {
    if (curve.event_times[j] > t) break;
    s = curve.survival[j];
  }
  return s;
}

/// Smallest event time with survival <= 0.5; absent when the curve never
/// reaches 0.5.
inline std::optional<double> median_survival(const KMCurve& curve) {
  for (std::size_t j = 0; j < curve.survival.size(); ++j)
    if (curve.survival[j] <= 0.5) return curve.event_times[j];
  return std::nullopt;
}

// --- bootstrap ---------------------------------------------------------------

struct ConfidenceBand {
  double level = 0.95;
  std::vector<double> times;
  std::vector<double> lower;
  std::vector<double> upper;
  int n_resamples = 0;
  std::uint64_t seed = 0;
};

enum class KMStatistic { median, survival_at };

/// Resampling scheme for the bootstrap. weighted_resample draws records
/// with probability proportional to their weights and evaluates the
/// unweighted risk-set-adjusted statistic; uniform_keep_weights draws
/// uniformly and keeps weights in the per-resample estimator.
enum class BootstrapMode { weighted_resample, uniform_keep_weights };

struct KMBootstrapResult {
  Interval statistic_ci;
  ConfidenceBand band;
  int n_resamples = 0;
  int n_degenerate = 0;
};

struct KMBootstrapOptions {
  int n_resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  KMStatistic statistic = KMStatistic::median;
  double at_time = 0.0;  // used when statistic == survival_at
  BootstrapMode mode = BootstrapMode::weighted_resample;
  bool risk_set_adjust = true;
  double max_degenerate_fraction = 0.05;
};

/// Percentile bootstrap for a KM statistic plus a pointwise survival band
/// over the point-estimate event times. Resamples whose statistic is
/// undefined (no events, or a median never reached) are recorded as
/// degenerate and skipped; if more than max_degenerate_fraction of the
/// resamples are degenerate the whole call aborts. Per-resample RNG streams
/// are derived from (seed, resample index), so results do not depend on
/// execution order.
inline KMBootstrapResult km_bootstrap(const Cohort& cohort,
                                      const Eigen::VectorXd& weights,
                                      const KMBootstrapOptions& opts) {
  const Eigen::Index n = cohort.size();
  detail::check_weights(weights, n);
  if (opts.n_resamples < 1) throw InvalidArgument("n_resamples must be >= 1");
  if (!(opts.level > 0.0 && opts.level < 1.0))
    throw InvalidArgument("level must lie in (0,1)");

  const KMCurve point = fit_km(cohort.entry_times(), cohort.observed_times(),
                               cohort.event_flags(), weights,
                               opts.risk_set_adjust);
  const std::vector<double>& grid = point.event_times;

  const Eigen::VectorXd entry = cohort.entry_times();
  const Eigen::VectorXd time = cohort.observed_times();
  const std::vector<bool> event = cohort.event_flags();

  WeightedSampler sampler(weights);

  std::vector<double> stats;
  std::vector<std::vector<double>> band_values(grid.size());
  stats.reserve(static_cast<std::size_t>(opts.n_resamples));
  int n_degenerate = 0;

  Eigen::VectorXd re_entry(n), re_time(n), re_weight(n);
  std::vector<bool> re_event(static_cast<std::size_t>(n));

  for (int r = 0; r < opts.n_resamples; ++r) {
    Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(r)));
    bool any_event = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index pick = opts.mode == BootstrapMode::weighted_resample
                                    ? sampler.draw(rng)
                                    : static_cast<Eigen::Index>(
                                          rng.uniform_index(static_cast<std::size_t>(n)));
      re_entry[i] = entry[pick];
      re_time[i] = time[pick];
      re_event[static_cast<std::size_t>(i)] = event[static_cast<std::size_t>(pick)];
      re_weight[i] =
          opts.mode == BootstrapMode::weighted_resample ? 1.0 : weights[pick];
      any_event = any_event || re_event[static_cast<std::size_t>(i)];
    }
    if (!any_event) {
      ++n_degenerate;
      continue;
    }

    const KMCurve curve =
        fit_km(re_entry, re_time, re_event, re_weight, opts.risk_set_adjust);

    std::optional<double> stat;
    if (opts.statistic == KMStatistic::median)
      stat = median_survival(curve);
    else
      stat = survival_at(curve, opts.at_time);
    if (!stat) {
      ++n_degenerate;
      continue;
    }
    stats.push_back(*stat);
    for (std::size_t j = 0; j < grid.size(); ++j)
      band_values[j].push_back(survival_at(curve, grid[j]));
  }

  const double degenerate_frac =
      static_cast<double>(n_degenerate) / static_cast<double>(opts.n_resamples);
  if (stats.empty() || degenerate_frac > opts.max_degenerate_fraction)
    throw DegenerateResample(std::to_string(n_degenerate) + " of " +
                             std::to_string(opts.n_resamples) +
                             " resamples had no usable statistic");

  const double alpha = 1.0 - opts.level;
  KMBootstrapResult result;
  result.statistic_ci = {percentile(stats, alpha / 2.0),
                         percentile(stats, 1.0 - alpha / 2.0)};
  result.n_resamples = opts.n_resamples;
  result.n_degenerate = n_degenerate;

  result.band.level = opts.level;
  result.band.times = grid;
  result.band.n_resamples = opts.n_resamples;
  result.band.seed = opts.seed;
  result.band.lower.resize(grid.size());
  result.band.upper.resize(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    // Widen to include the point estimate so the band always wraps the curve.
    result.band.lower[j] =
        std::min(percentile(band_values[j], alpha / 2.0), point.survival[j]);
    result.band.upper[j] =
        std::max(percentile(band_values[j], 1.0 - alpha / 2.0), point.survival[j]);
  }
  return result;
}

/// Percentile interval for one statistic of the weighted empirical
/// distribution.
inline Interval km_bootstrap_ci(const Cohort& cohort, const Eigen::VectorXd& weights,
                                int n_resamples, double level, std::uint64_t seed,
                                KMStatistic statistic = KMStatistic::median,
                                double at_time = 0.0,
                                BootstrapMode mode = BootstrapMode::weighted_resample) {
  KMBootstrapOptions opts;
  opts.n_resamples = n_resamples;
  opts.level = level;
  opts.seed = seed;
  opts.statistic = statistic;
  opts.at_time = at_time;
  opts.mode = mode;
  return km_bootstrap(cohort, weights, opts).statistic_ci;
}

}  // namespace ltsurv
