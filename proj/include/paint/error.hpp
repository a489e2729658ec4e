#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace paint {

/// Error categories surfaced to the CLI and HTTP layer as machine-readable codes.
enum class ErrorCode {
  kInvalidArgument,
  kSimulationFault,
  kInsufficientLabels,
  kDuplicateLabel,
  kVersionMismatch,
  kTruncated,
  kIo,
  kNotFound,
  kDimensionMismatch,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kSimulationFault: return "simulation_fault";
    case ErrorCode::kInsufficientLabels: return "insufficient_labels";
    case ErrorCode::kDuplicateLabel: return "duplicate_label";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace paint
