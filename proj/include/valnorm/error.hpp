#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace valnorm {

enum class ErrorCode {
  kInvalidArgument,
  kValueTableMismatch,
  kConflictingEvidence,
  kInvalidPurity,
  kActionMismatch,
  kStaleTask,
  kBoxConflict,
  kLinkOutOfWindow,
  kIncompleteSession,
  kSessionDone,
  kSessionNotDone,
  kSlotBlocked,
  kMissingCalibration,
  kUnknownDataset,
  kUnknownSession,
  kUnknownCalibration,
  kGoldCoverage,
  kParse,
  kIo,
};

std::string_view error_code_name(ErrorCode code);

/// Every recoverable failure in the library is reported through this type.
/// The code lets the HTTP layer and the CLI map failures to status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace valnorm
