#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ltsurv/errors.hpp"

namespace ltsurv {

enum class Arm { reference, truncated };

/// One subject: entry time E, observed time Y = min(T, C), event flag
/// delta = I(T <= C), baseline covariates, sampling weight, and cohort arm.
struct SurvivalRecord {
  double entry_time = 0.0;
  double observed_time = 0.0;
  bool event = false;
  Eigen::VectorXd covariates;
  double weight = 1.0;
  Arm arm = Arm::truncated;
};

/// Immutable validated collection of survival records with named covariates.
/// Construct through validate_cohort(); all member access is read-only, so
/// concurrent reads are safe.
class Cohort {
 public:
  // A default-constructed Cohort is an empty placeholder; estimators
  // reject it with EmptyCohort.
  Cohort() = default;

  Eigen::Index size() const { return static_cast<Eigen::Index>(records_.size()); }
  const std::vector<SurvivalRecord>& records() const { return records_; }
  const SurvivalRecord& operator[](Eigen::Index i) const {
    return records_[static_cast<std::size_t>(i)];
  }
  const std::vector<std::string>& covariate_names() const { return names_; }
  Eigen::Index covariate_arity() const {
    return static_cast<Eigen::Index>(names_.size());
  }

  Eigen::Index covariate_index(const std::string& name) const {
    for (std::size_t k = 0; k < names_.size(); ++k)
      if (names_[k] == name) return static_cast<Eigen::Index>(k);
    throw InvalidArgument("unknown covariate: " + name);
  }

  Eigen::VectorXd entry_times() const {
    return column([](const SurvivalRecord& r) { return r.entry_time; });
  }
  Eigen::VectorXd observed_times() const {
    return column([](const SurvivalRecord& r) { return r.observed_time; });
  }
  Eigen::VectorXd weights() const {
    return column([](const SurvivalRecord& r) { return r.weight; });
  }
  std::vector<bool> event_flags() const {
    std::vector<bool> out(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) out[i] = records_[i].event;
    return out;
  }
  /// Indicator column: 1 for the reference arm, 0 for the truncated arm.
  Eigen::VectorXd arm_indicator() const {
    return column([](const SurvivalRecord& r) {
      return r.arm == Arm::reference ? 1.0 : 0.0;
    });
  }

  /// Covariate columns by name, in the order requested.
  Eigen::MatrixXd covariate_matrix(const std::vector<std::string>& names) const {
    Eigen::MatrixXd X(size(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
      const Eigen::Index col = covariate_index(names[k]);
      for (Eigen::Index i = 0; i < size(); ++i)
        X(i, static_cast<Eigen::Index>(k)) = records_[static_cast<std::size_t>(i)]
                                                 .covariates[col];
    }
    return X;
  }
  Eigen::MatrixXd covariate_matrix() const { return covariate_matrix(names_); }

  std::vector<Eigen::Index> arm_indices(Arm arm) const {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < size(); ++i)
      if (records_[static_cast<std::size_t>(i)].arm == arm) idx.push_back(i);
    return idx;
  }

  Cohort subset(const std::vector<Eigen::Index>& idx) const {
    std::vector<SurvivalRecord> recs;
    recs.reserve(idx.size());
    for (Eigen::Index i : idx) recs.push_back(records_[static_cast<std::size_t>(i)]);
    Cohort out;
    out.records_ = std::move(recs);
    out.names_ = names_;
    return out;
  }

  friend Cohort validate_cohort(std::vector<SurvivalRecord> records,
                                std::vector<std::string> covariate_names,
                                bool require_truncation_consistency);

 private:
  std::vector<SurvivalRecord> records_;
  std::vector<std::string> names_;

  template <class F>
  Eigen::VectorXd column(F&& get) const {
    Eigen::VectorXd v(size());
    for (Eigen::Index i = 0; i < size(); ++i)
      v[i] = get(records_[static_cast<std::size_t>(i)]);
    return v;
  }
};

/// Validates records and assembles a Cohort.
///
/// Checks: nonempty input, uniform covariate arity, finite fields, positive
/// weights, positive observed times, nonnegative entry times; when
/// require_truncation_consistency is set, every record must satisfy the
/// selection condition Y > E.
inline Cohort validate_cohort(std::vector<SurvivalRecord> records,
                              std::vector<std::string> covariate_names = {},
                              bool require_truncation_consistency = false) {
  if (records.empty()) throw EmptyCohort();

  const Eigen::Index arity = records.front().covariates.size();
  if (!covariate_names.empty() &&
      static_cast<Eigen::Index>(covariate_names.size()) != arity)
    throw InconsistentArity("covariate_names has " +
                            std::to_string(covariate_names.size()) +
                            " entries but records carry " +
                            std::to_string(arity) + " covariates");
  if (covariate_names.empty())
    for (Eigen::Index k = 0; k < arity; ++k)
      covariate_names.push_back("z" + std::to_string(k + 1));

  for (std::size_t i = 0; i < records.size(); ++i) {
    const SurvivalRecord& r = records[i];
    const std::string at = "record " + std::to_string(i);
    if (r.covariates.size() != arity)
      throw InconsistentArity(at + " has " + std::to_string(r.covariates.size()) +
                              " covariates, expected " + std::to_string(arity));
    if (!std::isfinite(r.entry_time) || !std::isfinite(r.observed_time) ||
        !std::isfinite(r.weight) || !r.covariates.allFinite())
      throw NonFiniteValue(at);
    if (r.entry_time < 0.0)
      throw InvalidArgument(at + ": entry time must be nonnegative");
    if (!(r.observed_time > 0.0))
      throw InvalidArgument(at + ": observed time must be positive");
    if (!(r.weight > 0.0)) throw InvalidArgument(at + ": weight must be positive");
    if (require_truncation_consistency && !(r.observed_time > r.entry_time))
      throw TruncationViolation(at + " (Y=" + std::to_string(r.observed_time) +
                                ", E=" + std::to_string(r.entry_time) + ")");
  }

  Cohort cohort;
  cohort.records_ = std::move(records);
  cohort.names_ = std::move(covariate_names);
  return cohort;
}

/// Indices of subjects at risk at time t under the closed-interval
/// convention I(E_i <= t <= Y_i): a subject entering exactly at t counts
/// as at risk. (Cox fitting uses the left-open variant E_i < t <= Y_i;
/// see cox.hpp.)
inline std::vector<Eigen::Index> risk_set_at(const Cohort& cohort, double t) {
  if (!(t > 0.0)) throw InvalidArgument("risk_set_at requires t > 0");
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < cohort.size(); ++i) {
    const SurvivalRecord& r = cohort[i];
    if (r.entry_time <= t && t <= r.observed_time) idx.push_back(i);
  }
  return idx;
}

/// Strictly increasing deduplicated list of observed event times
/// {Y_i : delta_i = 1}. Ties are resolved by exact double comparison.
inline std::vector<double> distinct_event_times(const Cohort& cohort) {
  std::vector<double> times;
  for (const SurvivalRecord& r : cohort.records())
    if (r.event) times.push_back(r.observed_time);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

}  // namespace ltsurv
