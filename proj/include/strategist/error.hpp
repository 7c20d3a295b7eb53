#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace strategist {

enum class ErrorCode {
  invalid_argument,
  degenerate_axis,
  dimension_mismatch,
  out_of_bounds,
  duplicate_sample,
  malformed_document,
  not_positive_definite,
  degenerate_data,
  insufficient_trajectory,
  objective_failure,
  unknown_id,
  conflict,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::degenerate_axis: return "degenerate_axis";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::out_of_bounds: return "out_of_bounds";
    case ErrorCode::duplicate_sample: return "duplicate_sample";
    case ErrorCode::malformed_document: return "malformed_document";
    case ErrorCode::not_positive_definite: return "not_positive_definite";
    case ErrorCode::degenerate_data: return "degenerate_data";
    case ErrorCode::insufficient_trajectory: return "insufficient_trajectory";
    case ErrorCode::objective_failure: return "objective_failure";
    case ErrorCode::unknown_id: return "unknown_id";
    case ErrorCode::conflict: return "conflict";
  }
  return "unknown";
}

/// Library-wide exception. `detail` carries machine-readable context
/// (offending record, axis, conditioning diagnostic) when there is any.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace strategist
