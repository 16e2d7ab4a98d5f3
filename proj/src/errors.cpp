#include "mlqc/errors.hpp"

namespace mlqc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse:
      return "ParseError";
    case ErrorCode::kSchema:
      return "SchemaError";
    case ErrorCode::kNotMsStable:
      return "NotMsStable";
    case ErrorCode::kDualityViolation:
      return "DualityViolation";
    case ErrorCode::kSingularBlock:
      return "SingularBlock";
    case ErrorCode::kMaxIterationsExceeded:
      return "MaxIterationsExceeded";
    case ErrorCode::kDiverged:
      return "Diverged";
    case ErrorCode::kInitialPolicyNotStabilizing:
      return "InitialPolicyNotStabilizing";
    case ErrorCode::kIterateNotStabilizing:
      return "IterateNotStabilizing";
    case ErrorCode::kRetryExhausted:
      return "RetryExhausted";
    case ErrorCode::kUnstableRollout:
      return "UnstableRollout";
    case ErrorCode::kEigenFailure:
      return "EigenFailure";
    case ErrorCode::kLyapunovResidual:
      return "LyapunovResidual";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message,
             std::optional<int> iteration)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      iteration_(iteration) {}

}  // namespace mlqc
