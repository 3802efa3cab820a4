#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "ltsurv/errors.hpp"

namespace ltsurv {

/// Binary logistic regression fit. coefficients[0] is the intercept.
struct LogisticModel {
  Eigen::VectorXd coefficients;
  bool converged = false;
  int n_iterations = 0;
};

struct LogisticOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
  double max_abs_coefficient = 20.0;
};

namespace detail {

template <class Scalar>
Scalar sigmoid(Scalar t) {
  if (t >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-t));
  const Scalar e = std::exp(t);
  return e / (Scalar(1) + e);
}

// log(1 + exp(t)) without overflow.
template <class Scalar>
Scalar log1pexp(Scalar t) {
  if (t > Scalar(30)) return t;
  return std::log1p(std::exp(t));
}

}  // namespace detail

/// Bernoulli log-likelihood of a design matrix that already carries its
/// intercept column.
template <class Scalar>
Scalar logistic_loglik(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& design,
                       const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& labels,
                       const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& beta) {
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> eta = design * beta;
  Scalar ll = Scalar(0);
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    ll += labels[i] * eta[i] - detail::log1pexp(eta[i]);
  return ll;
}

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logistic_gradient(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& design,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& labels,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& beta) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mu = design * beta;
  for (Eigen::Index i = 0; i < mu.size(); ++i) mu[i] = detail::sigmoid(mu[i]);
  return design.transpose() * (labels - mu);
}

/// Newton/IRLS maximizer of the Bernoulli log-likelihood. The intercept
/// column is added internally; features holds covariates only.
inline LogisticModel fit_logistic(const Eigen::MatrixXd& features,
                                  const Eigen::VectorXd& labels,
                                  const LogisticOptions& opts = {}) {
  const Eigen::Index n = features.rows();
  const Eigen::Index p = features.cols() + 1;
  if (labels.size() != n)
    throw InvalidArgument("labels length does not match feature rows");

  bool any0 = false, any1 = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[i] == 0.0) any0 = true;
    else if (labels[i] == 1.0) any1 = true;
    else throw InvalidArgument("labels must be 0 or 1");
  }
  if (!any0 || !any1) throw SingleClass();

  Eigen::MatrixXd design(n, p);
  design.col(0).setOnes();
  design.rightCols(p - 1) = features;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < p)
    throw RankDeficientDesign("logistic design has rank " +
                              std::to_string(qr.rank()) + " < " + std::to_string(p));

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = logistic_loglik<double>(design, labels, beta);

  LogisticModel model;
  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    Eigen::VectorXd mu = design * beta;
    for (Eigen::Index i = 0; i < n; ++i) mu[i] = detail::sigmoid(mu[i]);
    const Eigen::VectorXd grad = design.transpose() * (labels - mu);

    model.n_iterations = iter;
    if (grad.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance) {
      model.converged = true;
      model.n_iterations = iter - 1;
      break;
    }

    const Eigen::VectorXd irls_w = mu.array() * (1.0 - mu.array());
    const Eigen::MatrixXd info =
        design.transpose() * irls_w.asDiagonal() * design;
    Eigen::VectorXd step = info.ldlt().solve(grad);

    double step_scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double ll_new = logistic_loglik<double>(design, labels, candidate);
    for (int h = 0; h < 30 && !(ll_new > ll - 1e-12); ++h) {
      step_scale *= 0.5;
      candidate = beta + step_scale * step;
      ll_new = logistic_loglik<double>(design, labels, candidate);
    }
    beta = candidate;
    ll = ll_new;

    if (beta.lpNorm<Eigen::Infinity>() > opts.max_abs_coefficient)
      throw SeparationDetected("max |coefficient| = " +
                               std::to_string(beta.lpNorm<Eigen::Infinity>()));
  }
  if (!model.converged) {
    // Final gradient check in case the cap was reached exactly at the solution.
    const Eigen::VectorXd grad = logistic_gradient<double>(design, labels, beta);
    if (grad.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance)
      model.converged = true;
    else
      throw NonConvergence("logistic IRLS after " +
                           std::to_string(opts.max_iterations) + " iterations");
  }
  model.coefficients = beta;
  return model;
}

/// P(label = 1 | z) for each row of features under a fitted model.
inline Eigen::VectorXd predict_proba(const LogisticModel& model,
                                     const Eigen::MatrixXd& features) {
  if (features.cols() + 1 != model.coefficients.size())
    throw ArityMismatch("prediction features do not match model arity");
  Eigen::VectorXd eta =
      (features * model.coefficients.tail(model.coefficients.size() - 1)).array() +
      model.coefficients[0];
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = detail::sigmoid(eta[i]);
  return eta;
}

}  // namespace ltsurv
