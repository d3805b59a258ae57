#include "valnorm/multiuser_session.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "valnorm/error.hpp"
#include "valnorm/log.hpp"

namespace valnorm {

namespace {

constexpr ValueId kNone = std::numeric_limits<ValueId>::max();

double max_of(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m = std::max(m, x);
  return m;
}

}  // namespace

std::string_view pipeline_stage_name(PipelineStage stage) {
  switch (stage) {
    case PipelineStage::kCalibrating: return "calibrating";
    case PipelineStage::kCleaning: return "cleaning";
    case PipelineStage::kMerging: return "merging";
    case PipelineStage::kDone: return "done";
  }
  return "unknown";
}

std::string_view slot_status_name(SlotStatus status) {
  switch (status) {
    case SlotStatus::kTask: return "task";
    case SlotStatus::kWaiting: return "waiting";
    case SlotStatus::kDone: return "done";
  }
  return "unknown";
}

MultiUserSession::MultiUserSession(std::shared_ptr<const ValueTable> values,
                                   std::shared_ptr<const SimilarityMatrix> matrix,
                                   std::shared_ptr<const PlanSpace> space, MultiUserOptions opts)
    : values_(std::move(values)),
      matrix_(std::move(matrix)),
      space_(std::move(space)),
      opts_(std::move(opts)) {
  const std::size_t k = opts_.users;
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one user");
  if (!values_ || !matrix_ || !space_ || matrix_->size() != values_->size()) {
    throw Error(ErrorCode::kInvalidArgument, "similarity matrix does not match the dataset");
  }
  if (!opts_.params.empty() && opts_.params.size() != k) {
    throw Error(ErrorCode::kInvalidArgument, "need one parameter set per user");
  }
  for (const auto& p : opts_.params) p.validate();
  if (!opts_.calibrate && !opts_.cap) {
    throw Error(ErrorCode::kMissingCalibration, "without calibration a cap is required");
  }
  if (!opts_.calibrate && opts_.params.empty()) {
    throw Error(ErrorCode::kMissingCalibration, "without calibration user parameters are required");
  }
  if (opts_.columns == 0) throw Error(ErrorCode::kInvalidArgument, "columns must be positive");
  if (opts_.cap) space_->partition(*opts_.cap);
  for (auto& b : stage_busy_) b.assign(k, 0.0);
  if (values_->empty()) {
    stage_ = PipelineStage::kDone;
    cap_ = opts_.cap.value_or(1);
    return;
  }
  if (opts_.calibrate) {
    const auto plan = plan_calibration(*matrix_, opts_.calibration);
    for (std::size_t i = 0; i < k; ++i) calibrating_.emplace_back(plan, opts_.base, opts_.calibration);
    stage_ = PipelineStage::kCalibrating;
  } else {
    cap_ = *opts_.cap;
    start_cleaning();
  }
}

void MultiUserSession::check_slot(std::size_t slot) const {
  if (slot >= opts_.users) {
    throw Error(ErrorCode::kInvalidArgument, "slot " + std::to_string(slot) + " out of range");
  }
}

SlotStatus MultiUserSession::status(std::size_t slot) const {
  check_slot(slot);
  switch (stage_) {
    case PipelineStage::kCalibrating:
      return calibrating_[slot].done() ? SlotStatus::kWaiting : SlotStatus::kTask;
    case PipelineStage::kCleaning: {
      const auto& s = shares_[slot].session;
      return s && !s->done() ? SlotStatus::kTask : SlotStatus::kWaiting;
    }
    case PipelineStage::kMerging:
      return merge_->task(slot) ? SlotStatus::kTask : SlotStatus::kWaiting;
    case PipelineStage::kDone: return SlotStatus::kDone;
  }
  return SlotStatus::kDone;
}

void MultiUserSession::expect_stage(PipelineStage stage, std::size_t slot) const {
  check_slot(slot);
  if (stage_ == PipelineStage::kDone) throw Error(ErrorCode::kSessionDone, "session is finished");
  if (stage_ != stage) {
    throw Error(ErrorCode::kStaleTask, "session is " + std::string(pipeline_stage_name(stage_)) +
                                           ", not " + std::string(pipeline_stage_name(stage)));
  }
  if (status(slot) == SlotStatus::kWaiting) {
    throw Error(ErrorCode::kSlotBlocked,
                "slot " + std::to_string(slot) + " is waiting for the other users");
  }
}

const UserParams& MultiUserSession::charge_params(std::size_t slot) const {
  return opts_.params.empty() ? fits_[slot].params : opts_.params[slot];
}

const CalibrationTask* MultiUserSession::calibration_task(std::size_t slot) const {
  check_slot(slot);
  return stage_ == PipelineStage::kCalibrating ? calibrating_[slot].next() : nullptr;
}

std::optional<Task> MultiUserSession::cleaning_task(std::size_t slot) const {
  check_slot(slot);
  if (stage_ != PipelineStage::kCleaning || !shares_[slot].session) return std::nullopt;
  const Task* t = shares_[slot].session->current_task();
  if (!t) return std::nullopt;
  Task g = *t;
  const auto& ids = shares_[slot].ids;
  for (auto& v : g.values) v = ids[v];
  for (auto& v : g.columns) v = ids[v];
  return g;
}

const CleaningSession* MultiUserSession::cleaning_session(std::size_t slot) const {
  check_slot(slot);
  return slot < shares_.size() ? shares_[slot].session.get() : nullptr;
}

const MergeScanTask* MultiUserSession::merge_task(std::size_t slot) const {
  check_slot(slot);
  return stage_ == PipelineStage::kMerging ? merge_->task(slot) : nullptr;
}

double MultiUserSession::submit_calibration(std::size_t slot, std::size_t task_index,
                                            CalibrationObservation observation) {
  expect_stage(PipelineStage::kCalibrating, slot);
  const double seconds = observation.seconds;
  calibrating_[slot].submit(task_index, std::move(observation));
  stage_busy_[0][slot] += seconds;
  if (std::all_of(calibrating_.begin(), calibrating_.end(),
                  [](const CalibrationSession& s) { return s.done(); })) {
    std::vector<UserParams> params;
    std::vector<PurityModel> purities;
    for (const auto& s : calibrating_) {
      fits_.push_back(s.result());
      params.push_back(fits_.back().params);
      purities.push_back(fits_.back().purity);
    }
    planning_params_ = average_params(params);
    purity_ = average_purity(purities);
    if (opts_.cap) {
      cap_ = *opts_.cap;
    } else {
      const auto plans = space_->price(purity_, planning_params_, opts_.global);
      cap_ = plans.selected_cap;
      estimated_seconds_ = plans.estimates.front().estimated_seconds;
    }
    log::info("calibration finished, plan cap " + std::to_string(cap_));
    start_cleaning();
  }
  return seconds;
}

void MultiUserSession::start_cleaning() {
  stage_ = PipelineStage::kCleaning;
  const Partition& clusters = space_->partition(cap_);
  const auto assignment = assign_clusters(clusters, opts_.users);
  shares_.clear();
  shares_.resize(opts_.users);
  outputs_.assign(opts_.users, {});
  for (std::size_t i = 0; i < opts_.users; ++i) {
    Share& share = shares_[i];
    for (std::size_t c : assignment[i]) {
      const auto& m = clusters.clusters()[c].members;
      share.ids.insert(share.ids.end(), m.begin(), m.end());
    }
    if (share.ids.empty()) continue;
    std::sort(share.ids.begin(), share.ids.end());
    share.local.assign(values_->size(), kNone);
    std::vector<std::string> strings;
    for (std::size_t j = 0; j < share.ids.size(); ++j) {
      strings.push_back((*values_)[share.ids[j]]);
      share.local[share.ids[j]] = static_cast<ValueId>(j);
    }
    std::vector<Group> groups;
    for (std::size_t c : assignment[i]) {
      Group g;
      for (ValueId v : clusters.clusters()[c].members) g.push_back(share.local[v]);
      groups.push_back(std::move(g));
    }
    SessionOptions so;
    so.params = charge_params(i);
    so.global = opts_.global;
    so.columns = opts_.columns;
    so.simulation = opts_.simulation;
    so.track_verification = opts_.track_verification;
    share.session = std::make_unique<CleaningSession>(
        std::make_shared<const ValueTable>(ValueTable::from_strings(strings)),
        Partition::from_groups(share.ids.size(), std::move(groups)), so);
  }
  if (std::all_of(shares_.begin(), shares_.end(),
                  [](const Share& s) { return !s.session || s.session->done(); })) {
    finish_cleaning();
  }
}

double MultiUserSession::submit_cleaning(std::size_t slot, const Action& action) {
  expect_stage(PipelineStage::kCleaning, slot);
  Share& share = shares_[slot];
  auto to_local = [&](ValueId v) {
    if (v >= share.local.size() || share.local[v] == kNone) {
      throw Error(ErrorCode::kActionMismatch,
                  "value " + std::to_string(v) + " is not in this user's share");
    }
    return share.local[v];
  };
  Action local = action;
  for (auto& v : local.marked) v = to_local(v);
  for (auto& [a, b] : local.links) {
    a = to_local(a);
    b = to_local(b);
  }
  for (auto& [a, b] : local.checks) {
    a = to_local(a);
    b = to_local(b);
  }
  const double charged = share.session->apply(local).charged_seconds;
  stage_busy_[1][slot] += charged;
  if (share.session->done() &&
      std::all_of(shares_.begin(), shares_.end(),
                  [](const Share& s) { return !s.session || s.session->done(); })) {
    finish_cleaning();
  }
  return charged;
}

void MultiUserSession::finish_cleaning() {
  for (std::size_t i = 0; i < opts_.users; ++i) {
    Share& share = shares_[i];
    if (!share.session) continue;
    const auto result = share.session->result();
    for (const auto& c : result.partition.clusters()) {
      Group g;
      for (ValueId v : c.members) g.push_back(share.ids[v]);
      outputs_[i].push_back(std::move(g));
    }
    std::vector<PairAssertion> evidence;
    for (const auto& a : result.verification.assertions()) {
      evidence.push_back(PairAssertion::make(share.ids[a.a], share.ids[a.b], a.polarity));
    }
    verification_.record(evidence);
  }
  if (opts_.users > 1) {
    MultiUserMergeOptions mo;
    mo.columns = opts_.columns;
    mo.track_verification = opts_.track_verification;
    mo.similarity = matrix_->config();
    merge_ = std::make_unique<MultiUserMergeRun>(*values_, outputs_, mo);
    stage_ = PipelineStage::kMerging;
    if (!merge_->done()) return;
  }
  std::vector<Group> final_clusters;
  if (merge_) {
    final_clusters = merge_->clusters();
  } else {
    final_clusters = outputs_[0];
  }
  partition_ = Partition::from_groups(values_->size(), std::move(final_clusters));
  stage_ = PipelineStage::kDone;
}

double MultiUserSession::submit_merge(std::size_t slot, const MergeScanAction& action) {
  expect_stage(PipelineStage::kMerging, slot);
  if (action.elapsed_seconds && !(*action.elapsed_seconds > 0.0 && *action.elapsed_seconds < 600.0)) {
    throw Error(ErrorCode::kActionMismatch, "elapsed seconds must lie in (0, 600)");
  }
  if (!action.ops.valid()) throw Error(ErrorCode::kActionMismatch, "operation counts are invalid");
  const bool real_time = !opts_.simulation && action.elapsed_seconds.has_value();
  const double charged = real_time ? *action.elapsed_seconds : action.ops.seconds(charge_params(slot));
  merge_->submit(slot, action, charged);
  if (merge_->done()) {
    partition_ = Partition::from_groups(values_->size(), merge_->clusters());
    stage_ = PipelineStage::kDone;
  }
  return charged;
}

PipelineReport MultiUserSession::report(const GoldPartition* gold) const {
  if (!done()) throw Error(ErrorCode::kSessionNotDone, "session is still running");
  PipelineReport r;
  r.users = opts_.users;
  r.cap = cap_;
  r.calibrated = !fits_.empty();
  r.purity = purity_;
  r.planning_params = planning_params_;
  r.estimated_seconds = estimated_seconds_;
  r.calibration_seconds = max_of(stage_busy_[0]);
  r.session_seconds = stage_busy_[1];
  r.split_merge_seconds = max_of(stage_busy_[1]);
  r.busy_seconds.assign(opts_.users, 0.0);
  for (std::size_t i = 0; i < opts_.users; ++i) {
    r.busy_seconds[i] = stage_busy_[0][i] + stage_busy_[1][i];
  }
  VerificationSet verification = verification_;
  if (merge_) {
    r.multi_user_seconds = merge_->seconds();
    r.rounds = merge_->rounds();
    for (std::size_t i = 0; i < opts_.users; ++i) r.busy_seconds[i] += merge_->busy_seconds()[i];
    verification.merge(merge_->verification());
  }
  r.wall_seconds = r.calibration_seconds + r.split_merge_seconds + r.multi_user_seconds;
  r.partition = values_->empty() ? Partition::singletons(0) : partition_;
  if (gold) {
    if (gold->entity_of.size() != values_->size()) {
      throw Error(ErrorCode::kGoldCoverage, "gold does not cover the dataset");
    }
    const auto pr = precision_recall(r.partition, *gold);
    r.precision = pr.precision;
    r.recall = pr.recall;
    r.gold_sequence = opts_.track_verification && is_gold_sequence(verification, *gold);
  }
  return r;
}

void drive_multi_user(MultiUserSession& session, const GoldPartition& gold,
                      std::span<const SyntheticUser> users) {
  if (users.size() != session.users()) {
    throw Error(ErrorCode::kInvalidArgument, "need one simulated user per slot");
  }
  std::vector<SimulatedActor> actors;
  for (const auto& u : users) actors.emplace_back(gold, u.params, session.options().global, u.seed);
  const bool real_time = !session.options().simulation;
  while (!session.done()) {
    for (std::size_t i = 0; i < users.size() && !session.done(); ++i) {
      if (session.status(i) != SlotStatus::kTask) continue;
      if (const CalibrationTask* t = session.calibration_task(i)) {
        session.submit_calibration(i, t->index, calibration_observation(*t, gold, users[i].params));
      } else if (auto t = session.cleaning_task(i)) {
        Action a = actors[i].act(*t);
        if (real_time) a.elapsed_seconds = std::max(1e-3, a.ops.seconds(users[i].params));
        session.submit_cleaning(i, a);
      } else if (const MergeScanTask* t = session.merge_task(i)) {
        MergeScanAction a = simulate_merge_scan(*t, gold);
        if (real_time) a.elapsed_seconds = std::max(1e-3, a.ops.seconds(users[i].params));
        session.submit_merge(i, a);
      }
    }
  }
}

}  // namespace valnorm
