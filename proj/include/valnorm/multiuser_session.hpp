#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "valnorm/calibration.hpp"
#include "valnorm/multiuser.hpp"
#include "valnorm/planner.hpp"
#include "valnorm/procedures.hpp"

namespace valnorm {

enum class PipelineStage { kCalibrating, kCleaning, kMerging, kDone };
std::string_view pipeline_stage_name(PipelineStage stage);

enum class SlotStatus { kTask, kWaiting, kDone };
std::string_view slot_status_name(SlotStatus status);

struct MultiUserOptions {
  std::size_t users = 1;
  bool calibrate = true;            // run calibration before cleaning
  std::optional<std::size_t> cap;   // fixed plan; required without calibration
  /// Per-user parameters for charging simulated actions. Empty uses each
  /// user's calibrated fit.
  std::vector<UserParams> params;
  CalibrationOptions calibration;
  UserParams base;
  GlobalParams global;
  std::size_t columns = 3;
  bool simulation = true;           // charge from tallies, else from elapsed time
  bool track_verification = true;
};

/// Live multi-user pipeline: calibration, cleaning of each user's share and
/// multi-user merge, one pending task per user slot. A stage ends when every
/// user has finished it; until then finished users wait. Stage time is the
/// slowest user's, and wall time is the sum over stages.
class MultiUserSession {
 public:
  MultiUserSession(std::shared_ptr<const ValueTable> values,
                   std::shared_ptr<const SimilarityMatrix> matrix,
                   std::shared_ptr<const PlanSpace> space, MultiUserOptions opts);

  std::size_t users() const { return opts_.users; }
  PipelineStage stage() const { return stage_; }
  bool done() const { return stage_ == PipelineStage::kDone; }
  SlotStatus status(std::size_t slot) const;
  std::size_t cap() const { return cap_; }
  const MultiUserOptions& options() const { return opts_; }

  /// Pending task of the slot for the current stage, or nullptr/nullopt.
  const CalibrationTask* calibration_task(std::size_t slot) const;
  /// Cleaning tasks carry dataset ids.
  std::optional<Task> cleaning_task(std::size_t slot) const;
  const MergeScanTask* merge_task(std::size_t slot) const;
  /// The slot's cleaning session during and after the cleaning stage.
  const CleaningSession* cleaning_session(std::size_t slot) const;

  /// Each submit throws kSessionDone once finished, kStaleTask when the
  /// stage has moved on, kSlotBlocked when the slot is waiting, plus the
  /// errors of the underlying stage. Returns the seconds charged.
  double submit_calibration(std::size_t slot, std::size_t task_index,
                            CalibrationObservation observation);
  double submit_cleaning(std::size_t slot, const Action& action);
  double submit_merge(std::size_t slot, const MergeScanAction& action);

  const std::vector<CalibrationResult>& calibrations() const { return fits_; }
  /// Throws kSessionNotDone before completion. Precision, recall and the
  /// gold-sequence check are filled in only when `gold` is given.
  PipelineReport report(const GoldPartition* gold = nullptr) const;

 private:
  struct Share {
    std::vector<ValueId> ids;           // local id -> dataset id
    std::vector<ValueId> local;         // dataset id -> local id, or npos
    std::unique_ptr<CleaningSession> session;
  };

  void check_slot(std::size_t slot) const;
  void expect_stage(PipelineStage stage, std::size_t slot) const;
  void start_cleaning();
  void finish_cleaning();
  const UserParams& charge_params(std::size_t slot) const;

  std::shared_ptr<const ValueTable> values_;
  std::shared_ptr<const SimilarityMatrix> matrix_;
  std::shared_ptr<const PlanSpace> space_;
  MultiUserOptions opts_;
  PipelineStage stage_ = PipelineStage::kCalibrating;
  std::size_t cap_ = 1;

  std::vector<CalibrationSession> calibrating_;
  std::vector<CalibrationResult> fits_;
  PurityModel purity_;
  UserParams planning_params_;
  double estimated_seconds_ = 0.0;
  std::vector<Share> shares_;
  std::vector<std::vector<Group>> outputs_;
  std::unique_ptr<MultiUserMergeRun> merge_;
  std::vector<double> stage_busy_[3];   // per stage, per user
  VerificationSet verification_;
  Partition partition_;
};

/// Answers every slot's tasks round robin with truthful simulated users.
void drive_multi_user(MultiUserSession& session, const GoldPartition& gold,
                      std::span<const SyntheticUser> users);

}  // namespace valnorm
