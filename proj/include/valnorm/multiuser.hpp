#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "valnorm/calibration.hpp"
#include "valnorm/core.hpp"
#include "valnorm/costmodel.hpp"
#include "valnorm/hac.hpp"
#include "valnorm/planner.hpp"
#include "valnorm/procedures.hpp"
#include "valnorm/simulator.hpp"

namespace valnorm {

/// Fieldwise arithmetic mean. Integer fields (memory size, columns) are
/// rounded to nearest. Throws kInvalidArgument on an empty pool.
UserParams average_params(std::span<const UserParams> users);
/// Mean of (a, b).
PurityModel average_purity(std::span<const PurityModel> models);

/// Cluster positions per user. Clusters go largest first (ties by position)
/// to the user with the fewest values so far (ties by user index).
std::vector<std::vector<std::size_t>> assign_clusters(const Partition& partition, std::size_t k);

struct MultiUserMergeOptions {
  std::size_t columns = 3;        // column values memorized per scan
  bool track_verification = true;
  SimilarityConfig similarity;    // orders rows by resemblance to the columns
  unsigned threads = 0;
};

/// One scan: the user memorizes `columns` (when `memorize_columns`) and
/// checks every row of one other list that matches a column.
struct MergeScanTask {
  std::size_t id = 0;               // per-user sequence
  std::size_t round = 0;
  std::size_t list = 0;             // owner of the rows
  std::vector<ValueId> columns;
  std::vector<ValueId> rows;        // most similar to the columns first
  bool memorize_columns = false;    // first list of a column group
};

struct MergeScanAction {
  std::size_t task_id = 0;
  std::vector<std::pair<ValueId, ValueId>> matches;  // (column, row)
  OpTally ops;
  std::optional<double> elapsed_seconds;
  bool operator==(const MergeScanAction&) const = default;
};

/// Truthful answer from gold. Rows are read in order until every column has
/// matched; each read costs a recall, each check a button, and the scan ends
/// with one more button.
MergeScanAction simulate_merge_scan(const MergeScanTask& task, const GoldPartition& gold);

struct MergeRound {
  std::size_t index = 0;
  std::size_t source_list = 0;              // list whose values became columns
  std::vector<std::size_t> chunk_sizes;     // columns handed to each user
  std::size_t matches = 0;
  std::vector<double> user_seconds;
  double seconds = 0.0;                     // slowest user
};

/// Barrier-synchronized merge of per-user lists of clean clusters. Each
/// round takes the longest remaining list, splits it into one contiguous
/// column chunk per user and has every user scan their chunk against
/// snapshots of the other lists. The round closes once every user has
/// finished; matched rows leave their lists and the source list retires.
/// Per-user calls may run concurrently for different users.
class MultiUserMergeRun {
 public:
  MultiUserMergeRun(const ValueTable& values, std::vector<std::vector<Group>> lists,
                    const MultiUserMergeOptions& opts = {});

  std::size_t users() const { return lists_.size(); }
  bool done() const { return done_; }
  std::size_t round() const { return rounds_.size(); }
  /// Pending scan for `user`, or nullptr once their chunk is finished.
  const MergeScanTask* task(std::size_t user) const;
  /// Throws kSlotBlocked when the user has no pending scan, kStaleTask for
  /// another task id, kActionMismatch for matches outside the task or
  /// repeating a column or row, and kConflictingEvidence when another user
  /// already matched the row this round. Unchanged on error. The conflict
  /// check runs here only with auto close; close_round always repeats it.
  void submit(std::size_t user, const MergeScanAction& action, double seconds);
  /// True when every user has finished the current round.
  bool round_complete() const;
  /// Closes the round. Called by submit unless the run was built for
  /// batch use, in which case the caller invokes it after joining workers.
  void close_round();
  void set_auto_close(bool on) { auto_close_ = on; }

  const std::vector<MergeRound>& rounds() const { return rounds_; }
  const std::vector<double>& busy_seconds() const { return busy_; }
  double seconds() const;
  const VerificationSet& verification() const { return verification_; }
  /// Current clusters, sorted members, ordered by smallest member.
  std::vector<Group> clusters() const;

 private:
  struct Cursor {
    std::vector<ValueId> chunk;
    std::vector<std::vector<ValueId>> others;  // snapshot, thinned as rows match
    std::vector<std::size_t> other_lists;
    std::size_t group = 0;
    std::size_t list = 0;
    std::optional<MergeScanTask> pending;
    std::vector<std::pair<ValueId, ValueId>> matches;
    std::vector<PairAssertion> evidence;
    double seconds = 0.0;
  };

  void start_round();
  void make_task(std::size_t user);
  std::size_t find(std::size_t slot) const;

  const ValueTable* values_;
  MultiUserMergeOptions opts_;
  std::vector<std::vector<Group>> lists_;
  std::vector<Group> slots_;
  std::vector<std::size_t> slot_of_;
  mutable std::vector<std::size_t> parent_;
  std::vector<std::vector<ValueId>> reps_;
  std::vector<GramSet> grams_;
  std::vector<Cursor> cursors_;
  std::vector<std::size_t> next_task_id_;
  std::vector<MergeRound> rounds_;
  MergeRound current_;
  std::vector<double> busy_;
  VerificationSet verification_;
  bool done_ = false;
  bool auto_close_ = true;
};

struct MultiUserMergeResult {
  std::vector<Group> clusters;   // sorted members, ordered by smallest member
  std::vector<MergeRound> rounds;
  std::vector<double> busy_seconds;  // per user
  double seconds = 0.0;              // sum of round maxima
  VerificationSet verification;
};

/// Runs MultiUserMergeRun to completion with truthful simulated users.
/// `lists[i]` belongs to user i; `users` supplies one parameter set per list.
MultiUserMergeResult multi_user_merge(const ValueTable& values,
                                      const std::vector<std::vector<Group>>& lists,
                                      const GoldPartition& gold, std::span<const UserParams> users,
                                      const MultiUserMergeOptions& opts = {});

struct PipelineOptions {
  std::optional<std::size_t> cap;  // fixed plan; nullopt calibrates and picks the plan
  GlobalParams global;
  CalibrationOptions calibration;
  UserParams base;                 // constants calibration does not measure
  std::size_t columns = 3;
  bool check_gold_sequence = true;
  unsigned threads = 0;
};

struct PipelineReport {
  std::size_t users = 0;
  std::size_t cap = 1;
  bool calibrated = false;
  PurityModel purity;                 // averaged fit, when calibrated
  UserParams planning_params;         // averaged fit, when calibrated
  double estimated_seconds = 0.0;     // model estimate for the executed plan
  double calibration_seconds = 0.0;   // slowest user
  double split_merge_seconds = 0.0;   // slowest user
  double multi_user_seconds = 0.0;
  double wall_seconds = 0.0;
  std::vector<double> busy_seconds;   // per user
  std::vector<double> session_seconds;
  std::vector<MergeRound> rounds;
  Partition partition;
  double precision = 0.0;
  double recall = 0.0;
  bool gold_sequence = false;
};

/// Calibrate every user, average, pick a plan, run HAC, assign clusters,
/// clean each share, then merge across users. With one user this is the
/// single-user pipeline. `space` must hold the chosen cap (every candidate
/// when planning).
PipelineReport run_pipeline(std::shared_ptr<const ValueTable> values, const GoldPartition& gold,
                            std::span<const SyntheticUser> users, const SimilarityMatrix& matrix,
                            const PlanSpace& space, const PipelineOptions& opts = {});

}  // namespace valnorm
