#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ltsurv/cohort.hpp"
#include "ltsurv/errors.hpp"
#include "ltsurv/rng.hpp"

namespace ltsurv {

/// One data-generating configuration: a non-truncated trial arm (trt = 1,
/// entry 0) and a real-world arm (trt = 0) whose entry times induce left
/// truncation through the shared confounders Z1 ~ Bernoulli(1 - p_entry)
/// and Z2 ~ Normal(0, z2_sd). Survival and censoring are exponential with
/// rate lambda_bh * exp(beta_trt trt + beta_z Z1 + beta_z Z2); entry is 0
/// for Z1 = 0 and exponential with rate lambda_entry = lambda_ebh *
/// exp(beta_entry Z2) otherwise. target_truncation is P(Y > E | trt = 0).
struct SimScenario {
  double p_entry_at_baseline = 0.2;
  double beta_entry = std::log(0.5);
  double beta_trt = std::log(0.8);
  double beta_z = std::log(2.0);
  double lambda_bh = 1.0 / 12.0;
  double target_truncation = 0.5;
  int n_rw_expected = 250;
  int n_trial = 250;
  double z2_sd = 0.5;
};

inline void validate_scenario(const SimScenario& s) {
  if (!(s.p_entry_at_baseline >= 0.0 && s.p_entry_at_baseline < 1.0))
    throw InvalidArgument("p_entry_at_baseline must lie in [0,1)");
  if (!(s.lambda_bh > 0.0)) throw InvalidArgument("lambda_bh must be positive");
  if (!(s.z2_sd > 0.0)) throw InvalidArgument("z2_sd must be positive");
  if (!(s.target_truncation > 0.0 && s.target_truncation < 1.0))
    throw InvalidArgument("target_truncation must lie in (0,1)");
  if (s.n_rw_expected < 1 || s.n_trial < 1)
    throw InvalidArgument("arm sizes must be positive");
  if (!std::isfinite(s.beta_entry) || !std::isfinite(s.beta_trt) ||
      !std::isfinite(s.beta_z))
    throw InvalidArgument("coefficients must be finite");
}

namespace detail {

// Rate of Y = min(T, C) given covariates; censoring shares the survival
// rate, so Y is exponential with twice the hazard.
inline double observed_rate(const SimScenario& s, double trt, double z1, double z2) {
  return 2.0 * s.lambda_bh * std::exp(s.beta_trt * trt + s.beta_z * (z1 + z2));
}

inline double entry_rate(const SimScenario& s, double lambda_ebh, double z2) {
  return lambda_ebh * std::exp(s.beta_entry * z2);
}

// Simpson quadrature of f against the Normal(0, sd) density.
template <class F>
double gauss_expect(double sd, F&& f, int steps = 4000) {
  const double lo = -10.0 * sd, hi = 10.0 * sd;
  const double h = (hi - lo) / steps;
  const double norm = 1.0 / (sd * std::sqrt(2.0 * M_PI));
  auto integrand = [&](double z) {
    const double u = z / sd;
    return norm * std::exp(-0.5 * u * u) * f(z);
  };
  double acc = integrand(lo) + integrand(hi);
  for (int k = 1; k < steps; ++k)
    acc += integrand(lo + k * h) * (k % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace detail

/// P(Y > E | z) for a real-world-arm subject: 1 in the Z1 = 0 stratum
/// (entry at baseline), otherwise the competing-exponentials probability
/// lambda_entry / (lambda_entry + rate(Y)).
inline double conditional_retention(const SimScenario& s, double lambda_ebh,
                                    double z1, double z2) {
  if (z1 == 0.0) return 1.0;
  const double le = detail::entry_rate(s, lambda_ebh, z2);
  return le / (le + detail::observed_rate(s, 0.0, 1.0, z2));
}

/// Marginal P(Y > E | trt = 0), integrating the Z1 = 1 stratum over Z2 by
/// quadrature.
inline double truncation_probability(const SimScenario& s, double lambda_ebh) {
  const double p0 = s.p_entry_at_baseline;
  const double stratum1 = detail::gauss_expect(s.z2_sd, [&](double z2) {
    return conditional_retention(s, lambda_ebh, 1.0, z2);
  });
  return p0 + (1.0 - p0) * stratum1;
}

struct CalibrationOptions {
  int n_montecarlo = 200000;
  double tolerance = 0.002;
  // Calibration uses its own fixed stream so that estimates are a
  // deterministic, monotone function of lambda_ebh.
  std::uint64_t seed = 0x11b0cafeULL;
};

/// Solves for the baseline entry rate lambda_ebh achieving the scenario's
/// target P(Y > E | trt = 0), by bisection on log(lambda_ebh) over
/// [-20, 20] against a fixed Monte Carlo sample. Subjects with Z1 = 0 are
/// never truncated, so no target at or below p_entry_at_baseline is
/// reachable.
inline double calibrate_entry_rate(const SimScenario& s,
                                   const CalibrationOptions& opts = {}) {
  validate_scenario(s);
  if (!(s.target_truncation > s.p_entry_at_baseline))
    throw UnachievableTarget(
        "target " + std::to_string(s.target_truncation) +
        " <= baseline-entry mass " + std::to_string(s.p_entry_at_baseline));

  // Common random numbers across lambda values: each Z1 = 1 replicate
  // reduces to a threshold on lambda_ebh at which it becomes non-truncated.
  Rng rng(opts.seed);
  std::vector<double> thresholds;
  thresholds.reserve(static_cast<std::size_t>(opts.n_montecarlo));
  std::int64_t n_baseline = 0;
  for (int rep = 0; rep < opts.n_montecarlo; ++rep) {
    const bool z1 = rng.bernoulli(1.0 - s.p_entry_at_baseline);
    const double z2 = rng.normal(0.0, s.z2_sd);
    const double rate_y = detail::observed_rate(s, 0.0, z1 ? 1.0 : 0.0, z2);
    const double y = rng.exponential(rate_y);
    const double u = rng.uniform_open01();
    if (!z1) {
      ++n_baseline;
      continue;
    }
    // Y > E  <=>  lambda_ebh > -log(u) / (exp(beta_entry z2) * Y)
    thresholds.push_back(-std::log(u) / (std::exp(s.beta_entry * z2) * y));
  }
  std::sort(thresholds.begin(), thresholds.end());

  const auto phat = [&](double lambda) {
    const auto below = std::lower_bound(thresholds.begin(), thresholds.end(), lambda);
    const auto count = static_cast<double>(below - thresholds.begin());
    return (static_cast<double>(n_baseline) + count) /
           static_cast<double>(opts.n_montecarlo);
  };

  double lo = -20.0, hi = 20.0;
  if (phat(std::exp(lo)) > s.target_truncation ||
      phat(std::exp(hi)) < s.target_truncation)
    throw BracketFailure("target " + std::to_string(s.target_truncation) +
                         " not bracketed by lambda in [e^-20, e^20]");

  double mid = 0.0, p_mid = 0.0;
  for (int step = 0; step < 200; ++step) {
    mid = 0.5 * (lo + hi);
    p_mid = phat(std::exp(mid));
    if (std::abs(p_mid - s.target_truncation) <= 0.25 * opts.tolerance) break;
    if (p_mid < s.target_truncation)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-13) break;
  }
  const double lambda = std::exp(mid);
  if (std::abs(phat(lambda) - s.target_truncation) > opts.tolerance)
    throw BracketFailure("bisection stalled at P = " + std::to_string(p_mid));
  return lambda;
}

/// One simulated data set: the complete (pre-truncation) two-arm cohort,
/// the observed cohort after dropping real-world records with Y <= E, and
/// the analytic density-ratio weights for the observed records (1 for
/// trial records).
struct GeneratedIteration {
  Cohort complete;
  Cohort truncated;
  Eigen::VectorXd true_weights;
};

/// Analytic density ratio w(z) = P(Y > E) / P(Y > E | z) for a
/// real-world-arm record; the oracle counterpart of classifier-estimated
/// weights.
inline double true_density_ratio(const SimScenario& s, double lambda_ebh,
                                 const SurvivalRecord& record) {
  const double z1 = record.covariates[0];
  const double z2 = record.covariates[1];
  return truncation_probability(s, lambda_ebh) /
         conditional_retention(s, lambda_ebh, z1, z2);
}

inline GeneratedIteration generate_iteration(const SimScenario& s,
                                             double lambda_ebh,
                                             std::uint64_t seed) {
  validate_scenario(s);
  if (!(lambda_ebh > 0.0)) throw InvalidArgument("lambda_ebh must be positive");

  Rng rng(seed);
  const auto n_rw = static_cast<int>(std::ceil(
      static_cast<double>(s.n_rw_expected) / s.target_truncation));

  std::vector<SurvivalRecord> records;
  records.reserve(static_cast<std::size_t>(n_rw + s.n_trial));
  const auto draw = [&](double trt, Arm arm) {
    const bool z1 = rng.bernoulli(1.0 - s.p_entry_at_baseline);
    const double z2 = rng.normal(0.0, s.z2_sd);
    double entry = 0.0;
    if (arm == Arm::truncated && z1)
      entry = rng.exponential(detail::entry_rate(s, lambda_ebh, z2));
    const double rate = s.lambda_bh * std::exp(s.beta_trt * trt +
                                               s.beta_z * ((z1 ? 1.0 : 0.0) + z2));
    const double t = rng.exponential(rate);
    const double c = rng.exponential(rate);
    SurvivalRecord r;
    r.entry_time = entry;
    r.observed_time = std::min(t, c);
    r.event = t <= c;
    r.covariates = Eigen::Vector2d(z1 ? 1.0 : 0.0, z2);
    r.weight = 1.0;
    r.arm = arm;
    records.push_back(std::move(r));
  };
  for (int i = 0; i < n_rw; ++i) draw(0.0, Arm::truncated);
  for (int i = 0; i < s.n_trial; ++i) draw(1.0, Arm::reference);

  GeneratedIteration out;
  out.complete = validate_cohort(records, {"z1", "z2"}, false);

  std::vector<SurvivalRecord> observed;
  for (const SurvivalRecord& r : records)
    if (r.arm == Arm::reference || r.observed_time > r.entry_time)
      observed.push_back(r);
  out.truncated = validate_cohort(std::move(observed), {"z1", "z2"}, true);

  const double p_marginal = truncation_probability(s, lambda_ebh);
  out.true_weights.resize(out.truncated.size());
  for (Eigen::Index i = 0; i < out.truncated.size(); ++i) {
    const SurvivalRecord& r = out.truncated[i];
    out.true_weights[i] =
        r.arm == Arm::reference
            ? 1.0
            : p_marginal / conditional_retention(s, lambda_ebh,
                                                 r.covariates[0], r.covariates[1]);
  }
  return out;
}

/// True marginal survival P(T > t) in the real-world arm (trt = 0),
/// mixing the Z1 strata and integrating Z2 by quadrature.
inline double rw_marginal_survival(const SimScenario& s, double t) {
  const double p0 = s.p_entry_at_baseline;
  const auto stratum = [&](double z1) {
    return detail::gauss_expect(s.z2_sd, [&](double z2) {
      const double rate = s.lambda_bh * std::exp(s.beta_z * (z1 + z2));
      return std::exp(-rate * t);
    });
  };
  return p0 * stratum(0.0) + (1.0 - p0) * stratum(1.0);
}

/// Time at which the real-world marginal survival equals q.
inline double rw_survival_quantile(const SimScenario& s, double q) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidArgument("q must lie in (0,1)");
  double lo = 0.0, hi = 1.0;
  while (rw_marginal_survival(s, hi) > q) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-10 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (rw_marginal_survival(s, mid) > q ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace ltsurv
