#include "nvsense/error.hpp"

namespace nvsense {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EigenFailure: return "EigenFailure";
    case ErrorCode::ZeroDecayRate: return "ZeroDecayRate";
    case ErrorCode::IntegrationUnstable: return "IntegrationUnstable";
    case ErrorCode::DegenerateSteadyState: return "DegenerateSteadyState";
    case ErrorCode::FitDiverged: return "FitDiverged";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::DegenerateAbscissa: return "DegenerateAbscissa";
    case ErrorCode::NonuniformSampling: return "NonuniformSampling";
    case ErrorCode::UnconvergedFit: return "UnconvergedFit";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonMonotonicFrequency: return "NonMonotonicFrequency";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace nvsense
