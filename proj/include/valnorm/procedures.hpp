#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "valnorm/core.hpp"
#include "valnorm/costmodel.hpp"

namespace valnorm {

/// Sorts ids by case-folded string, then raw bytes, then id.
void sort_alphabetically(const ValueTable& values, std::vector<ValueId>& ids);

/// Counts of the basic human operations performed while answering one task.
struct OpTally {
  double focus = 0.0;
  double select = 0.0;
  double match = 0.0;
  double memorize = 0.0;
  double recall = 0.0;
  double is_pure_calls = 0.0;
  double is_pure_examined = 0.0;      // values read across isPure calls
  double find_dom_small = 0.0;        // Σ ψ over findDom calls with ψ <= memory size
  double find_dom_large_calls = 0.0;
  double find_dom_large_sq = 0.0;     // Σ ψ² over findDom calls with ψ > memory size

  void button() { focus += 1; select += 1; }
  void is_pure(double examined) { is_pure_calls += 1; is_pure_examined += examined; }
  void find_dom(double size, int stm_capacity);

  double seconds(const UserParams& u) const;
  bool valid() const;  // every count finite and >= 0
  OpTally& operator+=(const OpTally& other);
  bool operator==(const OpTally&) const = default;
};

enum class Phase { kSplitting, kLocalMerge, kGlobalMerge, kDone };
std::string_view phase_name(Phase phase);

enum class TaskKind { kIsPureQuestion, kFindDomAndMark, kMarkValues, kLocalMergeScan, kGlobalMergeGrid };
std::string_view task_kind_name(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

enum class Button {
  kYes,
  kNo,
  kMarkValues,
  kCleanMixed,
  kCreateCleanNew,     // marked values are outside the dominating entity
  kCreateNewCleanOld,  // marked values are the dominating entity
  kDoneLocalMerging,
  kGlobalMerge,
};
std::string_view button_name(Button button);
Button parse_button(std::string_view name);

struct Task {
  std::size_t id = 0;
  TaskKind kind = TaskKind::kIsPureQuestion;
  bool nested = false;              // part of a merge run on a mixed cluster
  std::vector<ValueId> values;      // cluster values, sorted list, or grid rows
  std::vector<ValueId> columns;     // grid columns
  std::vector<Button> buttons;      // allowed buttons
  std::size_t clusters_remaining = 0;
  std::size_t round = 0;            // grid round within the current merge run
};

struct Action {
  std::size_t task_id = 0;
  Button button = Button::kYes;
  std::vector<ValueId> marked;                         // markValues
  std::vector<std::pair<ValueId, ValueId>> links;      // (later, earlier) in the list
  std::vector<std::pair<ValueId, ValueId>> checks;     // (column, value checked under it)
  OpTally ops;
  std::optional<double> elapsed_seconds;               // client-measured time
  bool operator==(const Action&) const = default;
};

struct Event {
  std::size_t sequence = 0;
  TaskKind kind = TaskKind::kIsPureQuestion;
  Action action;
  double charged_seconds = 0.0;
  std::size_t assertions_added = 0;
  Phase phase_after = Phase::kSplitting;
};

struct SessionOptions {
  UserParams params;
  GlobalParams global;
  std::size_t columns = 3;         // global-merge grid width
  bool simulation = true;          // enforce the memory window on links; charge from tallies
  bool track_verification = true;
};

struct SessionResult {
  Partition partition;
  double total_seconds = 0.0;
  std::array<double, 3> phase_seconds{};  // splitting, local merge, global merge
  VerificationSet verification;
};

/// The human part as a state machine: emits one task at a time and consumes
/// the matching action. Deterministic given the action sequence.
class CleaningSession {
 public:
  CleaningSession(std::shared_ptr<const ValueTable> values, Partition input, SessionOptions opts);

  static CleaningSession replay(std::shared_ptr<const ValueTable> values, Partition input,
                                SessionOptions opts, std::span<const Action> actions);

  Phase phase() const { return phase_; }
  bool done() const { return phase_ == Phase::kDone; }
  /// Pending task, or nullptr when done.
  const Task* current_task() const { return task_ ? &*task_ : nullptr; }

  /// Throws kStaleTask, kActionMismatch, kBoxConflict, kLinkOutOfWindow or
  /// kConflictingEvidence; the session is unchanged on error.
  const Event& apply(const Action& action);

  const std::vector<Event>& events() const { return events_; }
  double total_seconds() const { return total_seconds_; }
  const std::array<double, 3>& phase_seconds() const { return phase_seconds_; }
  const VerificationSet& verification() const { return verification_; }
  const ValueTable& values() const { return *values_; }
  const Partition& input() const { return input_; }
  const SessionOptions& options() const { return opts_; }
  /// Pure clusters produced by the split stage so far.
  const std::vector<Group>& split_output() const { return pure_; }

  /// Throws kIncompleteSession before completion.
  SessionResult result() const;

 private:
  struct Item {
    ValueId rep = 0;
    Group members;
  };
  struct MergeRun {
    std::vector<Item> list;
    bool local_done = false;
    std::size_t round = 0;
    std::vector<Group> output;
  };
  enum class SplitStep { kIsPure, kFindDom, kMark };
  struct SplitWork {
    Group values;
    SplitStep step = SplitStep::kIsPure;
  };

  MergeRun make_run(std::vector<Group> groups) const;
  std::optional<Task> merge_task(const MergeRun& run, bool nested) const;
  void advance();
  void split_next(Group g);

  std::vector<PairAssertion> apply_local(MergeRun& run, const Action& a) const;
  std::vector<PairAssertion> apply_grid(MergeRun& run, const Action& a) const;
  void check_shown(std::span<const ValueId> ids) const;

  std::shared_ptr<const ValueTable> values_;
  Partition input_;
  SessionOptions opts_;

  Phase phase_ = Phase::kSplitting;
  std::deque<Group> queue_;
  std::optional<SplitWork> split_;
  std::optional<MergeRun> nested_;
  MergeRun top_;
  std::vector<Group> pure_;
  std::optional<Task> task_;

  std::vector<Event> events_;
  VerificationSet verification_;
  double total_seconds_ = 0.0;
  std::array<double, 3> phase_seconds_{};
};

}  // namespace valnorm
