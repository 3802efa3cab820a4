#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ltsurv {

// Root of the library's error hierarchy. DataError covers malformed or
// inconsistent inputs (CLI exit code 2); NumericError covers estimation
// failures (CLI exit code 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// --- cohort / input validation -------------------------------------------

class EmptyCohort final : public DataError {
 public:
  EmptyCohort() : DataError("cohort contains no records") {}
};

class InconsistentArity final : public DataError {
 public:
  explicit InconsistentArity(const std::string& detail)
      : DataError("covariate arity mismatch: " + detail) {}
};

class NonFiniteValue final : public DataError {
 public:
  explicit NonFiniteValue(const std::string& detail)
      : DataError("non-finite value: " + detail) {}
};

class TruncationViolation final : public DataError {
 public:
  explicit TruncationViolation(const std::string& detail)
      : DataError("observed time does not exceed entry time: " + detail) {}
};

class ArityMismatch final : public DataError {
 public:
  explicit ArityMismatch(const std::string& detail)
      : DataError("matrix arity mismatch: " + detail) {}
};

class InvalidArgument final : public DataError {
 public:
  explicit InvalidArgument(const std::string& detail) : DataError(detail) {}
};

// --- file / config errors --------------------------------------------------

class MissingColumn final : public DataError {
 public:
  explicit MissingColumn(const std::string& column)
      : DataError("missing required column: " + column) {}
};

class ParseError final : public DataError {
 public:
  ParseError(std::size_t line, const std::string& detail)
      : DataError("line " + std::to_string(line) + ": " + detail), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError final : public DataError {
 public:
  ValidationError(std::size_t line, const std::string& reason)
      : DataError("line " + std::to_string(line) + ": " + reason), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError final : public DataError {
 public:
  ConfigError(const std::string& field_path, const std::string& detail)
      : DataError("config field '" + field_path + "': " + detail),
        field_path_(field_path) {}
  const std::string& field_path() const { return field_path_; }

 private:
  std::string field_path_;
};

// --- numerical / estimation errors ----------------------------------------

class ZeroRiskMass final : public NumericError {
 public:
  explicit ZeroRiskMass(double event_time)
      : NumericError("zero at-risk mass at event time " +
                     std::to_string(event_time)) {}
};

class NonConvergence final : public NumericError {
 public:
  explicit NonConvergence(const std::string& detail)
      : NumericError("failed to converge: " + detail) {}
};

class MonotoneLikelihood final : public NumericError {
 public:
  explicit MonotoneLikelihood(const std::string& detail)
      : NumericError("monotone likelihood (coefficient diverging): " + detail) {}
};

class RankDeficientDesign final : public NumericError {
 public:
  explicit RankDeficientDesign(const std::string& detail)
      : NumericError("rank-deficient design: " + detail) {}
};

class SeparationDetected final : public NumericError {
 public:
  explicit SeparationDetected(const std::string& detail)
      : NumericError("separation detected: " + detail) {}
};

class SingleClass final : public NumericError {
 public:
  SingleClass() : NumericError("labels contain a single class") {}
};

class DegenerateResample final : public NumericError {
 public:
  explicit DegenerateResample(const std::string& detail)
      : NumericError("degenerate bootstrap resamples: " + detail) {}
};

class UnachievableTarget final : public NumericError {
 public:
  explicit UnachievableTarget(const std::string& detail)
      : NumericError("unachievable calibration target: " + detail) {}
};

class BracketFailure final : public NumericError {
 public:
  explicit BracketFailure(const std::string& detail)
      : NumericError("root bracketing failed: " + detail) {}
};

class AllFailed final : public NumericError {
 public:
  explicit AllFailed(const std::string& detail)
      : NumericError("all iterations failed: " + detail) {}
};

class ZeroVariance final : public NumericError {
 public:
  explicit ZeroVariance(const std::string& detail)
      : NumericError("zero variance: " + detail) {}
};

}  // namespace ltsurv
