#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ltsurv/cohort.hpp"
#include "ltsurv/errors.hpp"
#include "ltsurv/stats.hpp"

namespace ltsurv {

enum class TieMethod { breslow, efron };

struct CoxOptions {
  TieMethod ties = TieMethod::breslow;
  bool risk_set_adjust = true;
  // Whether weights enter the risk-set sums as well as the event terms.
  // Off replicates the unweighted-denominator form of the log partial
  // likelihood; on matches standard weighted-Cox software semantics.
  bool inner_weights = true;
  int max_iterations = 50;
  double gradient_tolerance = 1e-8;
  int max_step_halvings = 10;
  double max_abs_coefficient = 20.0;
};

/// Design selector for cohort-level fits: an optional reference-arm
/// indicator column, an optional entry-time column, then named covariates.
struct CovariateSpec {
  bool arm_indicator = false;
  bool entry_time = false;
  std::vector<std::string> names;
};

/// Newton-Raphson fit of the weighted partial likelihood with delayed
/// entry. Risk sets use the left-open entry convention (E_j < t <= Y_j): a
/// subject entering exactly at an event time is not at risk for it (the KM
/// estimator keeps the closed convention). model_covariance is the inverse
/// observed information on the given weight scale; robust_covariance is
/// the score-residual (infinitesimal-jackknife) sandwich.
struct CoxFit {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd model_covariance;
  Eigen::MatrixXd robust_covariance;
  double log_partial_likelihood = 0.0;
  int n_iterations = 0;
  bool converged = false;
  std::vector<std::string> covariate_names;
  bool weighted = false;
  CoxOptions options;
  std::optional<CovariateSpec> design_spec;
};

struct CoxEval {
  double loglik = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd information;  // negative Hessian
};

namespace detail {

struct TieGroup {
  double time = 0.0;
  std::vector<Eigen::Index> members;  // event records with this exact time
  double event_weight = 0.0;          // sum of their weights
  Eigen::VectorXd weighted_x;         // sum of w_i * x_i over members
};

struct CoxProblem {
  Eigen::MatrixXd x;  // column-centered design
  Eigen::VectorXd entry;
  Eigen::VectorXd time;
  std::vector<bool> event;
  Eigen::VectorXd weights;
  std::vector<TieGroup> groups;             // descending event time
  std::vector<Eigen::Index> by_exit_desc;   // observed time descending
  std::vector<Eigen::Index> by_entry_desc;  // entry time descending
  bool adjust = true;
  bool inner_weights = true;
  TieMethod ties = TieMethod::breslow;

  double entry_of(Eigen::Index i) const { return adjust ? entry[i] : 0.0; }
};

inline CoxProblem make_problem(const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& entry,
                               const Eigen::VectorXd& time,
                               const std::vector<bool>& event,
                               const Eigen::VectorXd& weights,
                               const CoxOptions& opts) {
  const Eigen::Index n = X.rows();
  if (n == 0) throw EmptyCohort();
  if (X.cols() == 0) throw InvalidArgument("empty design matrix");
  if (entry.size() != n || time.size() != n ||
      static_cast<Eigen::Index>(event.size()) != n || weights.size() != n)
    throw InvalidArgument("cox inputs have inconsistent lengths");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
      throw InvalidArgument("weights must be positive and finite");
    if (opts.risk_set_adjust && !(time[i] > entry[i]))
      throw InvalidArgument("record " + std::to_string(i) +
                            " has observed time <= entry time");
  }
  if (std::none_of(event.begin(), event.end(), [](bool e) { return e; }))
    throw InvalidArgument("cohort has no events");

  CoxProblem prob;
  prob.x = X.rowwise() - X.colwise().mean();  // centering leaves the fit unchanged
  prob.entry = entry;
  prob.time = time;
  prob.event = event;
  prob.weights = weights;
  prob.adjust = opts.risk_set_adjust;
  prob.inner_weights = opts.inner_weights;
  prob.ties = opts.ties;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(prob.x);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols())
    throw RankDeficientDesign("centered design has rank " +
                              std::to_string(qr.rank()) + " < " +
                              std::to_string(X.cols()));

  std::vector<Eigen::Index> events_desc;
  for (Eigen::Index i = 0; i < n; ++i)
    if (event[static_cast<std::size_t>(i)]) events_desc.push_back(i);
  std::sort(events_desc.begin(), events_desc.end(),
            [&](Eigen::Index a, Eigen::Index b) { return time[a] > time[b]; });
  for (Eigen::Index i : events_desc) {
    if (prob.groups.empty() || prob.groups.back().time != time[i]) {
      TieGroup g;
      g.time = time[i];
      g.weighted_x = Eigen::VectorXd::Zero(X.cols());
      prob.groups.push_back(std::move(g));
    }
    TieGroup& g = prob.groups.back();
    g.members.push_back(i);
    g.event_weight += weights[i];
    g.weighted_x += weights[i] * prob.x.row(i).transpose();
  }

  prob.by_exit_desc.resize(static_cast<std::size_t>(n));
  std::iota(prob.by_exit_desc.begin(), prob.by_exit_desc.end(), 0);
  prob.by_entry_desc = prob.by_exit_desc;
  std::sort(prob.by_exit_desc.begin(), prob.by_exit_desc.end(),
            [&](Eigen::Index a, Eigen::Index b) { return time[a] > time[b]; });
  std::sort(prob.by_entry_desc.begin(), prob.by_entry_desc.end(),
            [&](Eigen::Index a, Eigen::Index b) {
              return prob.entry_of(a) > prob.entry_of(b);
            });
  return prob;
}

// One sweep over event times in decreasing order, maintaining the at-risk
// sums S0 = sum r_j, S1 = sum r_j x_j, S2 = sum r_j x_j x_j'. Subjects join
// when t drops to their exit time and leave when t drops to their entry
// time; since Y > E, a subject is always added before it is removed.
inline CoxEval evaluate(const CoxProblem& prob, const Eigen::VectorXd& beta,
                        bool want_derivatives) {
  const Eigen::Index n = prob.x.rows();
  const Eigen::Index p = prob.x.cols();

  Eigen::VectorXd eta = prob.x * beta;
  const double shift = eta.maxCoeff();
  Eigen::VectorXd risk(n);
  for (Eigen::Index i = 0; i < n; ++i)
    risk[i] = (prob.inner_weights ? prob.weights[i] : 1.0) *
              std::exp(eta[i] - shift);

  CoxEval eval;
  eval.gradient = Eigen::VectorXd::Zero(p);
  eval.information = Eigen::MatrixXd::Zero(p, p);

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  std::size_t p_in = 0, p_out = 0;

  for (const TieGroup& g : prob.groups) {
    const double t = g.time;
    while (p_in < prob.by_exit_desc.size() &&
           prob.time[prob.by_exit_desc[p_in]] >= t) {
      const Eigen::Index j = prob.by_exit_desc[p_in++];
      const Eigen::VectorXd xj = prob.x.row(j).transpose();
      s0 += risk[j];
      if (want_derivatives) {
        s1 += risk[j] * xj;
        s2 += risk[j] * xj * xj.transpose();
      }
    }
    while (p_out < prob.by_entry_desc.size() &&
           prob.entry_of(prob.by_entry_desc[p_out]) >= t) {
      const Eigen::Index j = prob.by_entry_desc[p_out++];
      const Eigen::VectorXd xj = prob.x.row(j).transpose();
      s0 -= risk[j];
      if (want_derivatives) {
        s1 -= risk[j] * xj;
        s2 -= risk[j] * xj * xj.transpose();
      }
    }
    if (!(s0 > 0.0)) throw ZeroRiskMass(t);

    double event_eta = 0.0;
    for (Eigen::Index i : g.members)
      event_eta += prob.weights[i] * (eta[i] - shift);
    eval.loglik += event_eta;
    if (want_derivatives) eval.gradient += g.weighted_x;

    if (prob.ties == TieMethod::breslow || g.members.size() == 1) {
      eval.loglik -= g.event_weight * std::log(s0);
      if (want_derivatives) {
        const Eigen::VectorXd xbar = s1 / s0;
        eval.gradient -= g.event_weight * xbar;
        eval.information +=
            g.event_weight * (s2 / s0 - xbar * xbar.transpose());
      }
    } else {
      const auto d = static_cast<double>(g.members.size());
      const double mean_w = g.event_weight / d;
      double s0_d = 0.0;
      Eigen::VectorXd s1_d = Eigen::VectorXd::Zero(p);
      Eigen::MatrixXd s2_d = Eigen::MatrixXd::Zero(p, p);
      for (Eigen::Index i : g.members) {
        const Eigen::VectorXd xi = prob.x.row(i).transpose();
        s0_d += risk[i];
        s1_d += risk[i] * xi;
        s2_d += risk[i] * xi * xi.transpose();
      }
      for (std::size_t l = 0; l < g.members.size(); ++l) {
        const double frac = static_cast<double>(l) / d;
        const double s0_l = s0 - frac * s0_d;
        if (!(s0_l > 0.0)) throw ZeroRiskMass(t);
        eval.loglik -= mean_w * std::log(s0_l);
        if (want_derivatives) {
          const Eigen::VectorXd s1_l = s1 - frac * s1_d;
          const Eigen::VectorXd xbar = s1_l / s0_l;
          eval.gradient -= mean_w * xbar;
          eval.information += mean_w * ((s2 - frac * s2_d) / s0_l -
                                        xbar * xbar.transpose());
        }
      }
    }
  }
  return eval;
}

}  // namespace detail

/// Log partial likelihood at beta with the given (raw) weights.
inline double cox_partial_loglik(const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& entry,
                                 const Eigen::VectorXd& time,
                                 const std::vector<bool>& event,
                                 const Eigen::VectorXd& weights,
                                 const Eigen::VectorXd& beta,
                                 const CoxOptions& opts = {}) {
  const detail::CoxProblem prob =
      detail::make_problem(X, entry, time, event, weights, opts);
  double value = detail::evaluate(prob, beta, false).loglik;
  // Undo the max-eta shift folded into the event terms so the value matches
  // the literal formula. evaluate() uses eta - shift in both the event term
  // and log S0, which cancels; nothing to undo.
  return value;
}

inline Eigen::VectorXd cox_partial_gradient(const Eigen::MatrixXd& X,
                                            const Eigen::VectorXd& entry,
                                            const Eigen::VectorXd& time,
                                            const std::vector<bool>& event,
                                            const Eigen::VectorXd& weights,
                                            const Eigen::VectorXd& beta,
                                            const CoxOptions& opts = {}) {
  const detail::CoxProblem prob =
      detail::make_problem(X, entry, time, event, weights, opts);
  return detail::evaluate(prob, beta, true).gradient;
}

/// Per-subject score residuals L_i with sum_i L_i = gradient(beta). Row i
/// aggregates subject i's event term and its appearances inside the
/// risk-set sums of other subjects' event times.
inline Eigen::MatrixXd cox_score_residuals(const Eigen::MatrixXd& X,
                                           const Eigen::VectorXd& entry,
                                           const Eigen::VectorXd& time,
                                           const std::vector<bool>& event,
                                           const Eigen::VectorXd& weights,
                                           const Eigen::VectorXd& beta,
                                           const CoxOptions& opts = {}) {
  const detail::CoxProblem prob =
      detail::make_problem(X, entry, time, event, weights, opts);
  const Eigen::Index n = prob.x.rows();
  const Eigen::Index p = prob.x.cols();

  Eigen::VectorXd eta = prob.x * beta;
  const double shift = eta.maxCoeff();
  Eigen::VectorXd risk(n);
  for (Eigen::Index i = 0; i < n; ++i)
    risk[i] = (prob.inner_weights ? prob.weights[i] : 1.0) *
              std::exp(eta[i] - shift);

  // First pass (descending sweep as in evaluate) collecting, per distinct
  // event time k: the hazard-increment scalar a_k and vector b_k that a
  // subject at risk accrues, the event-side average covariate, and the
  // tie-correction terms a2/b2 applying to the tied events themselves.
  const auto m = static_cast<Eigen::Index>(prob.groups.size());
  Eigen::VectorXd times_desc(m), a(m), a2(m);
  Eigen::MatrixXd b(p, m), b2(p, m), event_avg(p, m);

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  std::size_t p_in = 0, p_out = 0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const detail::TieGroup& g = prob.groups[static_cast<std::size_t>(k)];
    const double t = g.time;
    while (p_in < prob.by_exit_desc.size() &&
           prob.time[prob.by_exit_desc[p_in]] >= t) {
      const Eigen::Index j = prob.by_exit_desc[p_in++];
      s0 += risk[j];
      s1 += risk[j] * prob.x.row(j).transpose();
    }
    while (p_out < prob.by_entry_desc.size() &&
           prob.entry_of(prob.by_entry_desc[p_out]) >= t) {
      const Eigen::Index j = prob.by_entry_desc[p_out++];
      s0 -= risk[j];
      s1 -= risk[j] * prob.x.row(j).transpose();
    }
    if (!(s0 > 0.0)) throw ZeroRiskMass(t);

    times_desc[k] = t;
    if (prob.ties == TieMethod::breslow || g.members.size() == 1) {
      a[k] = g.event_weight / s0;
      b.col(k) = (g.event_weight / s0) * (s1 / s0);
      event_avg.col(k) = s1 / s0;
      a2[k] = 0.0;
      b2.col(k).setZero();
    } else {
      const auto d = static_cast<double>(g.members.size());
      const double mean_w = g.event_weight / d;
      double s0_d = 0.0;
      Eigen::VectorXd s1_d = Eigen::VectorXd::Zero(p);
      for (Eigen::Index i : g.members) {
        s0_d += risk[i];
        s1_d += risk[i] * prob.x.row(i).transpose();
      }
      double ak = 0.0, a2k = 0.0;
      Eigen::VectorXd bk = Eigen::VectorXd::Zero(p);
      Eigen::VectorXd b2k = Eigen::VectorXd::Zero(p);
      Eigen::VectorXd avg = Eigen::VectorXd::Zero(p);
      for (std::size_t l = 0; l < g.members.size(); ++l) {
        const double frac = static_cast<double>(l) / d;
        const double s0_l = s0 - frac * s0_d;
        const Eigen::VectorXd xbar = (s1 - frac * s1_d) / s0_l;
        ak += mean_w / s0_l;
        bk += (mean_w / s0_l) * xbar;
        a2k += mean_w * frac / s0_l;
        b2k += (mean_w * frac / s0_l) * xbar;
        avg += xbar / d;
      }
      a[k] = ak;
      b.col(k) = bk;
      a2[k] = a2k;
      b2.col(k) = b2k;
      event_avg.col(k) = avg;
    }
  }

  // Prefix sums over event times in ascending order.
  Eigen::VectorXd a_prefix = Eigen::VectorXd::Zero(m + 1);
  Eigen::MatrixXd b_prefix = Eigen::MatrixXd::Zero(p, m + 1);
  std::vector<double> times_asc(static_cast<std::size_t>(m));
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index src = m - 1 - k;  // ascending
    times_asc[static_cast<std::size_t>(k)] = times_desc[src];
    a_prefix[k + 1] = a_prefix[k] + a[src];
    b_prefix.col(k + 1) = b_prefix.col(k) + b.col(src);
  }
  // index of the last ascending event time <= t, or -1
  const auto last_le = [&](double t) -> Eigen::Index {
    const auto it = std::upper_bound(times_asc.begin(), times_asc.end(), t);
    return static_cast<Eigen::Index>(it - times_asc.begin()) - 1;
  };
  // group index (descending storage) of an event at ascending position
  const auto group_of = [&](Eigen::Index asc) { return m - 1 - asc; };

  Eigen::MatrixXd residuals = Eigen::MatrixXd::Zero(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = prob.x.row(i).transpose();
    Eigen::VectorXd li = Eigen::VectorXd::Zero(p);

    if (prob.event[static_cast<std::size_t>(i)]) {
      const Eigen::Index k = group_of(last_le(prob.time[i]));
      li += prob.weights[i] * (xi - event_avg.col(k));
      if (prob.inner_weights)
        li += risk[i] * (a2[k] * xi - b2.col(k));
    }
    if (prob.inner_weights) {
      const Eigen::Index hi = last_le(prob.time[i]) + 1;
      const Eigen::Index lo = last_le(prob.entry_of(i)) + 1;
      const double awin = a_prefix[hi] - a_prefix[lo];
      const Eigen::VectorXd bwin = b_prefix.col(hi) - b_prefix.col(lo);
      li -= risk[i] * (awin * xi - bwin);
    }
    residuals.row(i) = li.transpose();
  }
  return residuals;
}

namespace detail {

inline Eigen::MatrixXd invert_information(const Eigen::MatrixXd& info) {
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
    throw RankDeficientDesign("observed information is not positive definite");
  return ldlt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
}

// Ascent step: plain Newton when the information is positive definite,
// ridge-regularized otherwise (flat or concentrated risk sets can make the
// curvature singular away from the solution).
inline Eigen::VectorXd newton_step(const Eigen::MatrixXd& info,
                                   const Eigen::VectorXd& grad) {
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0.0) {
    const Eigen::VectorXd step = ldlt.solve(grad);
    if (step.allFinite()) return step;
  }
  const double ridge = std::max(1e-8, 1e-6 * info.diagonal().maxCoeff());
  const Eigen::MatrixXd reg =
      info + ridge * Eigen::MatrixXd::Identity(info.rows(), info.cols());
  return reg.ldlt().solve(grad);
}

}  // namespace detail

/// Newton-Raphson maximizer, starting at beta = 0 with step-halving when
/// the likelihood decreases. Weights are normalized by their maximum
/// internally (the maximizer is invariant); reported likelihood and model
/// covariance are translated back to the raw-weight scale.
inline CoxFit fit_cox(const Eigen::MatrixXd& X, const Eigen::VectorXd& entry,
                      const Eigen::VectorXd& time, const std::vector<bool>& event,
                      const Eigen::VectorXd& weights, const CoxOptions& opts = {},
                      std::vector<std::string> names = {}) {
  const double scale = weights.size() > 0 ? weights.maxCoeff() : 1.0;
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw InvalidArgument("weights must be positive and finite");
  const Eigen::VectorXd w_norm = weights / scale;

  const detail::CoxProblem prob =
      detail::make_problem(X, entry, time, event, w_norm, opts);
  const Eigen::Index p = X.cols();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  CoxEval eval = detail::evaluate(prob, beta, true);

  CoxFit fit;
  fit.options = opts;
  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    if (eval.gradient.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    fit.n_iterations = iter;

    const Eigen::VectorXd step = detail::newton_step(eval.information, eval.gradient);
    if (!step.allFinite())
      throw NonConvergence("non-finite Newton step at iteration " +
                           std::to_string(iter));

    double step_scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    CoxEval cand = detail::evaluate(prob, candidate, true);
    for (int h = 0; h < opts.max_step_halvings && !(cand.loglik >= eval.loglik);
         ++h) {
      step_scale *= 0.5;
      candidate = beta + step_scale * step;
      cand = detail::evaluate(prob, candidate, true);
    }
    beta = candidate;
    eval = cand;

    if (beta.lpNorm<Eigen::Infinity>() > opts.max_abs_coefficient)
      throw MonotoneLikelihood("max |coefficient| = " +
                               std::to_string(beta.lpNorm<Eigen::Infinity>()) +
                               " after iteration " + std::to_string(iter));
  }
  if (!fit.converged &&
      eval.gradient.lpNorm<Eigen::Infinity>() >= opts.gradient_tolerance)
    throw NonConvergence("cox partial likelihood after " +
                         std::to_string(opts.max_iterations) + " iterations");
  fit.converged = true;

  fit.coefficients = beta;
  // Raw-scale log partial likelihood: scaling weights by s multiplies all
  // terms by s and adds -log(s) inside each risk-sum logarithm.
  double event_weight_raw = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    if (event[static_cast<std::size_t>(i)]) event_weight_raw += weights[i];
  fit.log_partial_likelihood =
      scale * eval.loglik -
      (opts.inner_weights ? std::log(scale) * event_weight_raw : 0.0);
  fit.model_covariance = detail::invert_information(eval.information) / scale;

  const Eigen::MatrixXd resid =
      cox_score_residuals(X, entry, time, event, w_norm, beta, opts);
  const Eigen::MatrixXd meat = resid.transpose() * resid;
  const Eigen::MatrixXd bread = detail::invert_information(eval.information);
  fit.robust_covariance = bread * meat * bread;

  bool any_nonunit = false;
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    if (weights[i] != 1.0) any_nonunit = true;
  fit.weighted = any_nonunit;

  if (names.empty())
    for (Eigen::Index k = 0; k < p; ++k) names.push_back("x" + std::to_string(k + 1));
  fit.covariate_names = std::move(names);
  return fit;
}

namespace detail {

struct BuiltDesign {
  Eigen::MatrixXd X;
  std::vector<std::string> names;
};

inline BuiltDesign build_design(const Cohort& cohort, const CovariateSpec& spec) {
  std::vector<Eigen::VectorXd> cols;
  BuiltDesign out;
  if (spec.arm_indicator) {
    cols.push_back(cohort.arm_indicator());
    out.names.push_back("arm");
  }
  if (spec.entry_time) {
    cols.push_back(cohort.entry_times());
    out.names.push_back("entry_time");
  }
  for (const std::string& name : spec.names) {
    Eigen::MatrixXd c = cohort.covariate_matrix({name});
    cols.push_back(c.col(0));
    out.names.push_back(name);
  }
  if (cols.empty()) throw InvalidArgument("no covariates selected");
  out.X.resize(cohort.size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k)
    out.X.col(static_cast<Eigen::Index>(k)) = cols[k];
  return out;
}

}  // namespace detail

inline CoxFit fit_cox(const Cohort& cohort, const CovariateSpec& spec,
                      const std::optional<Eigen::VectorXd>& weights = std::nullopt,
                      const CoxOptions& opts = {}) {
  detail::BuiltDesign design = detail::build_design(cohort, spec);
  CoxFit fit = fit_cox(design.X, cohort.entry_times(), cohort.observed_times(),
                       cohort.event_flags(), weights ? *weights : cohort.weights(),
                       opts, std::move(design.names));
  fit.design_spec = spec;
  return fit;
}

/// Weighted score-residual sandwich I^{-1} M I^{-1} evaluated at the fitted
/// coefficients; identical to the robust_covariance stored on the fit.
inline Eigen::MatrixXd robust_variance(const CoxFit& fit, const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& entry,
                                       const Eigen::VectorXd& time,
                                       const std::vector<bool>& event,
                                       const Eigen::VectorXd& weights) {
  if (!fit.converged) throw NonConvergence("robust variance requires a converged fit");
  const Eigen::VectorXd w_norm = weights / weights.maxCoeff();
  const detail::CoxProblem prob =
      detail::make_problem(X, entry, time, event, w_norm, fit.options);
  const CoxEval eval = detail::evaluate(prob, fit.coefficients, true);
  const Eigen::MatrixXd resid = cox_score_residuals(
      X, entry, time, event, w_norm, fit.coefficients, fit.options);
  const Eigen::MatrixXd bread = detail::invert_information(eval.information);
  return bread * (resid.transpose() * resid) * bread;
}

inline Eigen::MatrixXd robust_variance(const CoxFit& fit, const Cohort& cohort,
                                       const Eigen::VectorXd& weights) {
  if (!fit.design_spec)
    throw InvalidArgument("fit does not carry a design specification");
  const detail::BuiltDesign design = detail::build_design(cohort, *fit.design_spec);
  return robust_variance(fit, design.X, cohort.entry_times(),
                         cohort.observed_times(), cohort.event_flags(), weights);
}

// --- summaries and truncation-dependence tests ------------------------------

struct HazardRatioRow {
  std::string name;
  double coefficient = 0.0;
  double se = 0.0;
  double hazard_ratio = 1.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double p_value = 1.0;
};

/// Wald summaries per coefficient: HR = exp(beta), CI = exp(beta +- z se),
/// two-sided normal p-value. Robust SEs are used for weighted fits, model
/// SEs otherwise.
inline std::vector<HazardRatioRow> hazard_ratio_summary(const CoxFit& fit,
                                                        double level = 0.95) {
  if (!(level > 0.0 && level < 1.0))
    throw InvalidArgument("level must lie in (0,1)");
  const Eigen::MatrixXd& cov =
      fit.weighted ? fit.robust_covariance : fit.model_covariance;
  const double z = normal_quantile(0.5 + level / 2.0);
  std::vector<HazardRatioRow> rows;
  for (Eigen::Index k = 0; k < fit.coefficients.size(); ++k) {
    HazardRatioRow row;
    row.name = fit.covariate_names[static_cast<std::size_t>(k)];
    row.coefficient = fit.coefficients[k];
    row.se = std::sqrt(cov(k, k));
    row.hazard_ratio = std::exp(row.coefficient);
    row.ci_lower = std::exp(row.coefficient - z * row.se);
    row.ci_upper = std::exp(row.coefficient + z * row.se);
    row.p_value = row.se > 0.0 ? normal_two_sided_p(row.coefficient / row.se) : 1.0;
    rows.push_back(row);
  }
  return rows;
}

struct TestResult {
  double hazard_ratio = 1.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double p_value = 1.0;
  double coefficient = 0.0;
  double se = 0.0;
  std::vector<std::string> adjusted_for;
};

namespace detail {

inline TestResult entry_time_test(const Cohort& cohort,
                                  std::vector<std::string> confounders,
                                  double level, CoxOptions opts) {
  bool any_delayed = false;
  for (const SurvivalRecord& r : cohort.records())
    if (r.entry_time > 0.0) any_delayed = true;
  if (!any_delayed)
    throw InvalidArgument("cohort has no delayed entries to test");

  CovariateSpec spec;
  spec.entry_time = true;
  spec.names = confounders;
  opts.risk_set_adjust = true;
  const CoxFit fit = fit_cox(cohort, spec, std::nullopt, opts);
  const HazardRatioRow row = hazard_ratio_summary(fit, level).front();

  TestResult result;
  result.hazard_ratio = row.hazard_ratio;
  result.ci_lower = row.ci_lower;
  result.ci_upper = row.ci_upper;
  result.p_value = row.p_value;
  result.coefficient = row.coefficient;
  result.se = row.se;
  result.adjusted_for = std::move(confounders);
  return result;
}

}  // namespace detail

/// Tests for marginally dependent left truncation: a risk-set-adjusted Cox
/// regression of the observed time on the entry time. A coefficient away
/// from zero indicates dependence between survival and entry.
inline TestResult test_marginal_dependence(const Cohort& cohort,
                                           double level = 0.95,
                                           const CoxOptions& opts = {}) {
  return detail::entry_time_test(cohort, {}, level, opts);
}

/// Tests for conditionally dependent left truncation given confounders:
/// the entry-time coefficient in a risk-set-adjusted Cox model on entry
/// time plus the named confounders.
inline TestResult test_conditional_dependence(const Cohort& cohort,
                                              std::vector<std::string> confounders,
                                              double level = 0.95,
                                              const CoxOptions& opts = {}) {
  if (confounders.empty())
    throw InvalidArgument("conditional test requires confounders");
  return detail::entry_time_test(cohort, std::move(confounders), level, opts);
}

}  // namespace ltsurv
