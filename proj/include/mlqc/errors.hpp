#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mlqc {

enum class ErrorCode {
  // Input errors.
  kParse,
  kSchema,
  // Numerical / solver errors.
  kNotMsStable,
  kDualityViolation,
  kSingularBlock,
  kMaxIterationsExceeded,
  kDiverged,
  kInitialPolicyNotStabilizing,
  kIterateNotStabilizing,
  kRetryExhausted,
  kUnstableRollout,
  kEigenFailure,
  kLyapunovResidual,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` tells callers what went
/// wrong without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<int> iteration = std::nullopt);

  ErrorCode code() const { return code_; }
  /// Iteration index at which a solver failed, when meaningful.
  std::optional<int> iteration() const { return iteration_; }
  /// Parse and schema failures are the caller's fault; everything else is a
  /// property of the numerics.
  bool is_input_error() const {
    return code_ == ErrorCode::kParse || code_ == ErrorCode::kSchema;
  }

 private:
  ErrorCode code_;
  std::optional<int> iteration_;
};

}  // namespace mlqc
