#pragma once

#include <stdexcept>
#include <string>

namespace cqr {

enum class ErrorCode {
  // data
  EmptyDataset,
  AllCensored,
  DimensionMismatch,
  NonFiniteValue,
  ResponseBelowLimit,
  InconsistentCensorFlag,
  DuplicateSubject,
  MissingTime,
  UnknownCovariate,
  ParseError,
  // usage
  FormulaError,
  ConfigError,
  InvalidArgument,
  // numerical
  RankDeficient,
  EmptyActiveSet,
  NonConvergence,
  DimensionTooLarge,
  NoPairs,
  NotScalar,
  ZeroDenominator,
  UnboundedInterval,
  DegenerateResample,
};

enum class ErrorCategory { Usage, Data, Numerical };

ErrorCategory category_of(ErrorCode code) noexcept;
const char* to_string(ErrorCode code) noexcept;

/// Every library failure is reported through this type; `code()` drives the
/// CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace cqr
