#include "valnorm/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

#include "valnorm/error.hpp"

namespace valnorm {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kValueTableMismatch: return "ValueTableMismatch";
    case ErrorCode::kConflictingEvidence: return "ConflictingEvidence";
    case ErrorCode::kInvalidPurity: return "InvalidPurity";
    case ErrorCode::kActionMismatch: return "ActionMismatch";
    case ErrorCode::kStaleTask: return "StaleTask";
    case ErrorCode::kBoxConflict: return "BoxConflict";
    case ErrorCode::kLinkOutOfWindow: return "LinkOutOfWindow";
    case ErrorCode::kIncompleteSession: return "IncompleteSession";
    case ErrorCode::kSessionDone: return "SessionDone";
    case ErrorCode::kSessionNotDone: return "SessionNotDone";
    case ErrorCode::kSlotBlocked: return "SlotBlocked";
    case ErrorCode::kMissingCalibration: return "MissingCalibration";
    case ErrorCode::kUnknownDataset: return "UnknownDataset";
    case ErrorCode::kUnknownSession: return "UnknownSession";
    case ErrorCode::kUnknownCalibration: return "UnknownCalibration";
    case ErrorCode::kGoldCoverage: return "GoldCoverage";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

namespace log {
namespace {

std::atomic<Level> g_level{Level::kWarn};
std::mutex g_mutex;

std::string_view tag(Level level) {
  switch (level) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarn: return "warn";
    case Level::kError: return "error";
    case Level::kOff: break;
  }
  return "";
}

}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void write(Level lvl, std::string_view message) {
  if (lvl < g_level.load()) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::clog << "[valnorm " << tag(lvl) << "] " << message << '\n';
}

}  // namespace log
}  // namespace valnorm
