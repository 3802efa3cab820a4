#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ltsurv/errors.hpp"
#include "ltsurv/logistic.hpp"
#include "ltsurv/stats.hpp"

namespace ltsurv {

/// Absolute standardized mean differences between the reference and
/// (weighted) truncated samples, one entry per covariate. The denominator
/// is the pooled SD of the two unweighted samples, sqrt((s_ref^2 +
/// s_trunc^2)/2). A covariate constant in both samples has SMD 0 when the
/// means agree and +inf otherwise.
struct BalanceReport {
  std::vector<std::string> covariate_names;
  std::vector<double> unweighted_smd;
  std::vector<double> weighted_smd;
  double threshold = 0.1;

  bool all_balanced() const {
    for (double s : weighted_smd)
      if (!(s <= threshold)) return false;
    return true;
  }
};

/// Classifier-based density-ratio weights for the truncated sample.
/// Reference records conceptually carry weight 1.
struct DensityRatioFit {
  LogisticModel model;
  Eigen::VectorXd weights;     // one per truncated record
  double sample_adjustment = 1.0;  // n_truncated / n_reference
  BalanceReport balance;
};

/// Predict-probability contract for pluggable classifiers: train on
/// (features, labels in {0,1}) and return a row-wise P(label = 1 | z)
/// predictor.
using ProbPredictor = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;
using ClassifierTrainer =
    std::function<ProbPredictor(const Eigen::MatrixXd&, const Eigen::VectorXd&)>;

inline ClassifierTrainer logistic_trainer(LogisticOptions opts = {}) {
  return [opts](const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    LogisticModel model = fit_logistic(X, y, opts);
    return [model](const Eigen::MatrixXd& Z) { return predict_proba(model, Z); };
  };
}

inline BalanceReport balance_report(const Eigen::MatrixXd& truncated_Z,
                                    const Eigen::MatrixXd& reference_Z,
                                    const Eigen::VectorXd& weights,
                                    double threshold = 0.1,
                                    std::vector<std::string> names = {}) {
  if (truncated_Z.cols() != reference_Z.cols())
    throw ArityMismatch("truncated has " + std::to_string(truncated_Z.cols()) +
                        " covariates, reference has " +
                        std::to_string(reference_Z.cols()));
  if (weights.size() != truncated_Z.rows())
    throw InvalidArgument("weights length does not match truncated rows");
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
      throw InvalidArgument("balance weights must be positive and finite");

  const Eigen::Index p = truncated_Z.cols();
  BalanceReport report;
  report.threshold = threshold;
  if (names.empty())
    for (Eigen::Index k = 0; k < p; ++k)
      names.push_back("z" + std::to_string(k + 1));
  report.covariate_names = std::move(names);

  const double w_total = weights.sum();
  const auto n_t = static_cast<double>(truncated_Z.rows());
  const auto n_r = static_cast<double>(reference_Z.rows());

  for (Eigen::Index k = 0; k < p; ++k) {
    const double mean_ref = reference_Z.col(k).mean();
    const double mean_trunc = truncated_Z.col(k).mean();
    const double mean_trunc_w = weights.dot(truncated_Z.col(k)) / w_total;

    const double var_ref =
        n_r > 1 ? (reference_Z.col(k).array() - mean_ref).square().sum() / (n_r - 1)
                : 0.0;
    const double var_trunc =
        n_t > 1 ? (truncated_Z.col(k).array() - mean_trunc).square().sum() / (n_t - 1)
                : 0.0;
    const double pooled_sd = std::sqrt((var_ref + var_trunc) / 2.0);

    const auto smd = [&](double mean_diff) {
      if (pooled_sd > 0.0) return std::abs(mean_diff) / pooled_sd;
      return mean_diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    };
    report.unweighted_smd.push_back(smd(mean_ref - mean_trunc));
    report.weighted_smd.push_back(smd(mean_ref - mean_trunc_w));
  }
  return report;
}

struct DensityRatioOptions {
  // Optional weight cap, expressed as a quantile of the estimated weights
  // (e.g. 0.99). No trimming by default; extreme weights are a diagnostic.
  std::optional<double> cap_quantile = std::nullopt;
  double balance_threshold = 0.1;
  LogisticOptions logistic = {};
};

/// Density-ratio weights via the labeled-concatenation construction:
/// stack reference (J = 1) above truncated (J = 0) covariates, fit a
/// probabilistic classifier for P(J = 1 | Z), and set each truncated record's
/// weight to odds(z) * P(J=0)/P(J=1) with the empirical sample adjustment
/// n_truncated / n_reference.
inline DensityRatioFit estimate_weights(const Eigen::MatrixXd& truncated_Z,
                                        const Eigen::MatrixXd& reference_Z,
                                        const DensityRatioOptions& opts = {},
                                        std::vector<std::string> names = {}) {
  if (truncated_Z.rows() == 0 || reference_Z.rows() == 0)
    throw InvalidArgument("both samples must be nonempty");
  if (truncated_Z.cols() != reference_Z.cols())
    throw ArityMismatch("truncated has " + std::to_string(truncated_Z.cols()) +
                        " covariates, reference has " +
                        std::to_string(reference_Z.cols()));

  const Eigen::Index n_ref = reference_Z.rows();
  const Eigen::Index n_trunc = truncated_Z.rows();
  Eigen::MatrixXd stacked(n_ref + n_trunc, truncated_Z.cols());
  stacked.topRows(n_ref) = reference_Z;
  stacked.bottomRows(n_trunc) = truncated_Z;
  Eigen::VectorXd labels(n_ref + n_trunc);
  labels.head(n_ref).setOnes();
  labels.tail(n_trunc).setZero();

  DensityRatioFit fit;
  fit.model = fit_logistic(stacked, labels, opts.logistic);
  fit.sample_adjustment =
      static_cast<double>(n_trunc) / static_cast<double>(n_ref);

  const Eigen::VectorXd p1 = predict_proba(fit.model, truncated_Z);
  fit.weights =
      (p1.array() / (1.0 - p1.array())) * fit.sample_adjustment;

  if (opts.cap_quantile) {
    std::vector<double> w(fit.weights.data(), fit.weights.data() + fit.weights.size());
    const double cap = percentile(std::move(w), *opts.cap_quantile);
    fit.weights = fit.weights.cwiseMin(cap);
  }

  fit.balance = balance_report(truncated_Z, reference_Z, fit.weights,
                               opts.balance_threshold, std::move(names));
  return fit;
}

/// Same construction with a pluggable classifier. Only the weights and the
/// balance report are produced; no parametric model is exposed.
inline DensityRatioFit estimate_weights_with(const ClassifierTrainer& trainer,
                                             const Eigen::MatrixXd& truncated_Z,
                                             const Eigen::MatrixXd& reference_Z,
                                             const DensityRatioOptions& opts = {},
                                             std::vector<std::string> names = {}) {
  if (truncated_Z.rows() == 0 || reference_Z.rows() == 0)
    throw InvalidArgument("both samples must be nonempty");
  if (truncated_Z.cols() != reference_Z.cols())
    throw ArityMismatch("covariate arity mismatch between samples");

  const Eigen::Index n_ref = reference_Z.rows();
  const Eigen::Index n_trunc = truncated_Z.rows();
  Eigen::MatrixXd stacked(n_ref + n_trunc, truncated_Z.cols());
  stacked.topRows(n_ref) = reference_Z;
  stacked.bottomRows(n_trunc) = truncated_Z;
  Eigen::VectorXd labels(n_ref + n_trunc);
  labels.head(n_ref).setOnes();
  labels.tail(n_trunc).setZero();

  const ProbPredictor predict = trainer(stacked, labels);
  const Eigen::VectorXd p1 = predict(truncated_Z);
  for (Eigen::Index i = 0; i < p1.size(); ++i)
    if (!(p1[i] > 0.0 && p1[i] < 1.0))
      throw NumericError("classifier returned a probability outside (0,1)");

  DensityRatioFit fit;
  fit.sample_adjustment =
      static_cast<double>(n_trunc) / static_cast<double>(n_ref);
  fit.weights = (p1.array() / (1.0 - p1.array())) * fit.sample_adjustment;
  if (opts.cap_quantile) {
    std::vector<double> w(fit.weights.data(), fit.weights.data() + fit.weights.size());
    const double cap = percentile(std::move(w), *opts.cap_quantile);
    fit.weights = fit.weights.cwiseMin(cap);
  }
  fit.balance = balance_report(truncated_Z, reference_Z, fit.weights,
                               opts.balance_threshold, std::move(names));
  return fit;
}

}  // namespace ltsurv
