#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nvsense {

// Stable error codes. The numeric values double as CLI exit codes, so they
// must never be renumbered.
enum class ErrorCode : int {
  InvalidArgument = 2,
  EigenFailure = 3,
  ZeroDecayRate = 4,
  IntegrationUnstable = 5,
  DegenerateSteadyState = 6,
  FitDiverged = 7,
  IllConditioned = 8,
  DegenerateAbscissa = 9,
  NonuniformSampling = 10,
  UnconvergedFit = 11,
  ZeroDenominator = 12,
  ParseError = 13,
  NonMonotonicFrequency = 14,
  EmptyFile = 15,
  IoError = 16,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// ParseError carrying the 1-based line number of the offending row.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace nvsense
