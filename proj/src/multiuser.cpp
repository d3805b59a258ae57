#include "valnorm/multiuser.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>

#include "valnorm/error.hpp"
#include "valnorm/log.hpp"
#include "valnorm/procedures.hpp"

namespace valnorm {

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  unsigned count = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  count = static_cast<unsigned>(std::min<std::size_t>(count, n));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < count; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

UserParams average_params(std::span<const UserParams> users) {
  if (users.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot average an empty user pool");
  if (users.size() == 1) return users[0];
  UserParams m;
  const double k = static_cast<double>(users.size());
  // Offsets from the first user keep identical pools exact.
  auto mean = [&](auto field) {
    const double first = static_cast<double>(users[0].*field);
    double s = 0.0;
    for (const auto& u : users) s += static_cast<double>(u.*field) - first;
    return first + s / k;
  };
  m.focus = mean(&UserParams::focus);
  m.select = mean(&UserParams::select);
  m.match = mean(&UserParams::match);
  m.memorize = mean(&UserParams::memorize);
  m.recall = mean(&UserParams::recall);
  m.is_pure_slope = mean(&UserParams::is_pure_slope);
  m.is_pure_offset = mean(&UserParams::is_pure_offset);
  m.find_dom_linear = mean(&UserParams::find_dom_linear);
  m.find_dom_quadratic = mean(&UserParams::find_dom_quadratic);
  m.find_dom_offset = mean(&UserParams::find_dom_offset);
  m.stm_capacity = static_cast<int>(std::lround(mean(&UserParams::stm_capacity)));
  m.columns = static_cast<int>(std::lround(mean(&UserParams::columns)));
  m.row_fraction = mean(&UserParams::row_fraction);
  return m;
}

PurityModel average_purity(std::span<const PurityModel> models) {
  if (models.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot average zero purity models");
  PurityModel m{0.0, 0.0};
  for (const auto& p : models) {
    m.a += p.a;
    m.b += p.b;
  }
  m.a /= static_cast<double>(models.size());
  m.b /= static_cast<double>(models.size());
  return m;
}

std::vector<std::vector<std::size_t>> assign_clusters(const Partition& partition, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one user");
  const auto& clusters = partition.clusters();
  std::vector<std::size_t> order(clusters.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return clusters[a].members.size() > clusters[b].members.size();
  });
  std::vector<std::vector<std::size_t>> out(k);
  std::vector<std::size_t> load(k, 0);
  for (std::size_t c : order) {
    const auto user = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    out[user].push_back(c);
    load[user] += clusters[c].members.size();
  }
  for (auto& share : out) std::sort(share.begin(), share.end());
  return out;
}

MergeScanAction simulate_merge_scan(const MergeScanTask& task, const GoldPartition& gold) {
  MergeScanAction a;
  a.task_id = task.id;
  a.ops.memorize = task.memorize_columns ? static_cast<double>(task.columns.size()) : 0.0;
  for (ValueId v : task.rows) {
    a.ops.recall += 1;
    auto hit = std::find_if(task.columns.begin(), task.columns.end(),
                            [&](ValueId b) { return gold.entity_of.at(b) == gold.entity_of.at(v); });
    if (hit != task.columns.end()) {
      a.matches.emplace_back(*hit, v);
      a.ops.button();
      if (a.matches.size() == task.columns.size()) break;
    }
  }
  a.ops.button();
  return a;
}

MultiUserMergeRun::MultiUserMergeRun(const ValueTable& values,
                                     std::vector<std::vector<Group>> lists,
                                     const MultiUserMergeOptions& opts)
    : values_(&values), opts_(opts), lists_(std::move(lists)) {
  const std::size_t k = lists_.size();
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "multi-user merge needs at least one list");
  if (opts_.columns == 0) throw Error(ErrorCode::kInvalidArgument, "columns must be positive");
  // Every input cluster becomes a slot; lists hold slot representatives.
  slot_of_.assign(values.size(), 0);
  std::vector<char> seen(values.size(), 0);
  reps_.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (const auto& g : lists_[i]) {
      if (g.empty()) throw Error(ErrorCode::kInvalidArgument, "empty cluster in a user list");
      for (ValueId v : g) {
        if (v >= values.size() || seen[v]) {
          throw Error(ErrorCode::kInvalidArgument, "user lists must be disjoint dataset ids");
        }
        seen[v] = 1;
        slot_of_[v] = slots_.size();
      }
      reps_[i].push_back(representative(values, g));
      slots_.push_back(g);
    }
  }
  parent_.resize(slots_.size());
  std::iota(parent_.begin(), parent_.end(), 0);
  grams_.resize(values.size());
  for (const auto& list : reps_) {
    for (ValueId v : list) grams_[v] = gram_set(values[v], opts_.similarity);
  }
  cursors_.resize(k);
  next_task_id_.assign(k, 0);
  busy_.assign(k, 0.0);
  start_round();
}

std::size_t MultiUserMergeRun::find(std::size_t x) const {
  while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
  return x;
}

void MultiUserMergeRun::start_round() {
  const std::size_t k = lists_.size();
  const auto remaining =
      std::count_if(reps_.begin(), reps_.end(), [](const auto& l) { return !l.empty(); });
  if (remaining <= 1) {
    done_ = true;
    for (auto& c : cursors_) c = Cursor{};
    return;
  }
  current_ = MergeRound{};
  current_.index = rounds_.size();
  std::size_t source = 0;
  for (std::size_t i = 1; i < k; ++i) {
    if (reps_[i].size() > reps_[source].size()) source = i;
  }
  current_.source_list = source;
  const auto& columns = reps_[source];
  std::size_t offset = 0;
  for (std::size_t i = 0; i < k; ++i) {
    // Contiguous chunks, the first |D*| mod k one value longer.
    const std::size_t len = columns.size() / k + (i < columns.size() % k ? 1 : 0);
    current_.chunk_sizes.push_back(len);
    Cursor c;
    c.chunk.assign(columns.begin() + static_cast<std::ptrdiff_t>(offset),
                   columns.begin() + static_cast<std::ptrdiff_t>(offset + len));
    offset += len;
    for (std::size_t j = 0; j < k; ++j) {
      if (j != source && !reps_[j].empty()) {
        c.others.push_back(reps_[j]);
        c.other_lists.push_back(j);
      }
    }
    cursors_[i] = std::move(c);
    make_task(i);
  }
}

void MultiUserMergeRun::make_task(std::size_t user) {
  Cursor& c = cursors_[user];
  c.pending.reset();
  bool first_in_group = c.list == 0;
  while (c.group * opts_.columns < c.chunk.size()) {
    if (c.list >= c.others.size()) {
      ++c.group;
      c.list = 0;
      first_in_group = true;
      continue;
    }
    const auto& rows = c.others[c.list];
    if (rows.empty()) {
      ++c.list;
      continue;
    }
    MergeScanTask t;
    t.id = next_task_id_[user]++;
    t.round = rounds_.size();
    t.list = c.other_lists[c.list];
    const std::size_t start = c.group * opts_.columns;
    t.columns.assign(c.chunk.begin() + static_cast<std::ptrdiff_t>(start),
                     c.chunk.begin() + static_cast<std::ptrdiff_t>(
                                           std::min(c.chunk.size(), start + opts_.columns)));
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double best = 0.0;
      for (ValueId b : t.columns) best = std::max(best, jaccard(grams_[b], grams_[rows[i]]));
      order.emplace_back(-best, i);
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    for (const auto& [score, i] : order) t.rows.push_back(rows[i]);
    t.memorize_columns = first_in_group;
    c.pending = std::move(t);
    return;
  }
}

const MergeScanTask* MultiUserMergeRun::task(std::size_t user) const {
  if (user >= cursors_.size()) throw Error(ErrorCode::kInvalidArgument, "no such user slot");
  const auto& p = cursors_[user].pending;
  return p ? &*p : nullptr;
}

void MultiUserMergeRun::submit(std::size_t user, const MergeScanAction& action, double seconds) {
  const MergeScanTask* t = task(user);
  if (done_) throw Error(ErrorCode::kSessionDone, "merge is finished");
  if (!t) throw Error(ErrorCode::kSlotBlocked, "user is waiting for the round to close");
  if (action.task_id != t->id) {
    throw Error(ErrorCode::kStaleTask, "action answers task " + std::to_string(action.task_id) +
                                           ", current task is " + std::to_string(t->id));
  }
  if (!(seconds >= 0.0) || !std::isfinite(seconds)) {
    throw Error(ErrorCode::kInvalidArgument, "scan time must be finite and non-negative");
  }
  std::vector<char> column_used(t->columns.size(), 0);
  std::vector<std::size_t> row_pos;
  for (auto [b, v] : action.matches) {
    auto ci = std::find(t->columns.begin(), t->columns.end(), b);
    auto ri = std::find(t->rows.begin(), t->rows.end(), v);
    if (ci == t->columns.end() || ri == t->rows.end()) {
      throw Error(ErrorCode::kActionMismatch, "match outside the scanned columns and rows");
    }
    auto& used = column_used[static_cast<std::size_t>(ci - t->columns.begin())];
    const auto pos = static_cast<std::size_t>(ri - t->rows.begin());
    if (used || std::find(row_pos.begin(), row_pos.end(), pos) != row_pos.end()) {
      throw Error(ErrorCode::kActionMismatch, "a column or row is matched twice");
    }
    used = 1;
    row_pos.push_back(pos);
  }
  if (auto_close_) {
    for (std::size_t o = 0; o < cursors_.size(); ++o) {
      if (o == user) continue;
      for (auto [b, v] : action.matches) {
        for (auto [ob, ov] : cursors_[o].matches) {
          if (ov == v) {
            throw Error(ErrorCode::kConflictingEvidence,
                        "value '" + (*values_)[v] + "' matched into two clusters");
          }
        }
      }
    }
  }

  Cursor& c = cursors_[user];
  if (opts_.track_verification) {
    // Rows after the last match go unread once every column has matched.
    std::size_t read = t->rows.size();
    if (action.matches.size() == t->columns.size() && !row_pos.empty()) {
      read = *std::max_element(row_pos.begin(), row_pos.end()) + 1;
    }
    for (auto [b, v] : action.matches) c.evidence.push_back(PairAssertion::match(b, v));
    for (std::size_t i = 0; i < read; ++i) {
      if (std::find(row_pos.begin(), row_pos.end(), i) != row_pos.end()) continue;
      for (ValueId b : t->columns) c.evidence.push_back(PairAssertion::non_match(b, t->rows[i]));
    }
  }
  auto& rows = c.others[c.list];
  for (auto [b, v] : action.matches) {
    c.matches.emplace_back(b, v);
    std::erase(rows, v);
  }
  c.seconds += seconds;
  ++c.list;
  make_task(user);
  if (auto_close_ && round_complete()) close_round();
}

bool MultiUserMergeRun::round_complete() const {
  if (done_) return false;
  return std::all_of(cursors_.begin(), cursors_.end(), [](const Cursor& c) { return !c.pending; });
}

void MultiUserMergeRun::close_round() {
  if (!round_complete()) throw Error(ErrorCode::kIncompleteSession, "round still has open scans");
  std::vector<std::pair<ValueId, ValueId>> matched_rows;  // (row, column)
  for (const auto& c : cursors_) {
    for (auto [b, v] : c.matches) matched_rows.emplace_back(v, b);
  }
  std::sort(matched_rows.begin(), matched_rows.end());
  for (std::size_t i = 1; i < matched_rows.size(); ++i) {
    if (matched_rows[i].first == matched_rows[i - 1].first) {
      throw Error(ErrorCode::kConflictingEvidence,
                  "value '" + (*values_)[matched_rows[i].first] + "' matched into two clusters");
    }
  }
  for (std::size_t i = 0; i < cursors_.size(); ++i) {
    const auto& c = cursors_[i];
    current_.user_seconds.push_back(c.seconds);
    current_.seconds = std::max(current_.seconds, c.seconds);
    busy_[i] += c.seconds;
    verification_.record(c.evidence);
  }
  std::vector<char> gone(values_->size(), 0);
  for (auto [v, b] : matched_rows) {
    const std::size_t x = find(slot_of_[v]);
    const std::size_t y = find(slot_of_[b]);
    if (x != y) parent_[std::max(x, y)] = std::min(x, y);
    gone[v] = 1;
  }
  current_.matches = matched_rows.size();
  for (auto& list : reps_) std::erase_if(list, [&](ValueId v) { return gone[v] != 0; });
  reps_[current_.source_list].clear();
  log::debug("multi-user round " + std::to_string(current_.index) + ": " +
             std::to_string(current_.matches) + " matches, " + std::to_string(current_.seconds) +
             " s");
  rounds_.push_back(std::move(current_));
  start_round();
}

double MultiUserMergeRun::seconds() const {
  double s = 0.0;
  for (const auto& r : rounds_) s += r.seconds;
  return s;
}

std::vector<Group> MultiUserMergeRun::clusters() const {
  std::vector<Group> merged(slots_.size());
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    auto& g = merged[find(s)];
    g.insert(g.end(), slots_[s].begin(), slots_[s].end());
  }
  std::vector<Group> out;
  for (auto& g : merged) {
    if (g.empty()) continue;
    std::sort(g.begin(), g.end());
    out.push_back(std::move(g));
  }
  std::sort(out.begin(), out.end(), [](const Group& a, const Group& b) { return a.front() < b.front(); });
  return out;
}

MultiUserMergeResult multi_user_merge(const ValueTable& values,
                                      const std::vector<std::vector<Group>>& lists,
                                      const GoldPartition& gold, std::span<const UserParams> users,
                                      const MultiUserMergeOptions& opts) {
  const std::size_t k = users.size();
  if (k == 0 || lists.size() != k) {
    throw Error(ErrorCode::kInvalidArgument, "multi-user merge needs one list per user");
  }
  if (gold.entity_of.size() != values.size()) {
    throw Error(ErrorCode::kGoldCoverage, "gold does not cover the dataset");
  }
  MultiUserMergeRun run(values, lists, opts);
  run.set_auto_close(false);
  while (!run.done()) {
    parallel_for(k, opts.threads, [&](std::size_t i) {
      while (const MergeScanTask* t = run.task(i)) {
        const auto a = simulate_merge_scan(*t, gold);
        run.submit(i, a, a.ops.seconds(users[i]));
      }
    });
    run.close_round();
  }
  MultiUserMergeResult result;
  result.clusters = run.clusters();
  result.rounds = run.rounds();
  result.busy_seconds = run.busy_seconds();
  result.seconds = run.seconds();
  result.verification = run.verification();
  return result;
}

PipelineReport run_pipeline(std::shared_ptr<const ValueTable> values, const GoldPartition& gold,
                            std::span<const SyntheticUser> users, const SimilarityMatrix& matrix,
                            const PlanSpace& space, const PipelineOptions& opts) {
  const std::size_t k = users.size();
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one user");
  if (gold.entity_of.size() != values->size()) {
    throw Error(ErrorCode::kGoldCoverage, "gold covers " + std::to_string(gold.entity_of.size()) +
                                              " values, dataset has " +
                                              std::to_string(values->size()));
  }
  PipelineReport report;
  report.users = k;
  report.busy_seconds.assign(k, 0.0);
  report.session_seconds.assign(k, 0.0);
  report.precision = 1.0;
  report.recall = 1.0;
  report.gold_sequence = true;
  if (values->empty()) return report;

  if (opts.cap) {
    report.cap = *opts.cap;
  } else {
    std::vector<CalibrationResult> fits(k);
    parallel_for(k, opts.threads, [&](std::size_t i) {
      fits[i] = simulate_calibration(matrix, gold, users[i].params, opts.base, opts.calibration);
    });
    std::vector<UserParams> params;
    std::vector<PurityModel> purities;
    for (std::size_t i = 0; i < k; ++i) {
      params.push_back(fits[i].params);
      purities.push_back(fits[i].purity);
      report.busy_seconds[i] += fits[i].total_seconds;
      report.calibration_seconds = std::max(report.calibration_seconds, fits[i].total_seconds);
    }
    report.calibrated = true;
    report.planning_params = average_params(params);
    report.purity = average_purity(purities);
    const auto plans = space.price(report.purity, report.planning_params, opts.global);
    report.cap = plans.selected_cap;
    report.estimated_seconds = plans.estimates.front().estimated_seconds;
  }
  const Partition& clusters = space.partition(report.cap);
  const auto shares = assign_clusters(clusters, k);

  // Each user cleans their share as a dataset of its own.
  std::vector<std::vector<Group>> outputs(k);
  std::vector<std::vector<PairAssertion>> evidence(k);
  parallel_for(k, opts.threads, [&](std::size_t i) {
    std::vector<ValueId> ids;
    for (std::size_t c : shares[i]) {
      const auto& m = clusters.clusters()[c].members;
      ids.insert(ids.end(), m.begin(), m.end());
    }
    if (ids.empty()) return;
    std::sort(ids.begin(), ids.end());
    std::vector<std::string> strings;
    std::vector<int> labels;
    std::vector<ValueId> local(values->size(), 0);
    for (std::size_t j = 0; j < ids.size(); ++j) {
      strings.push_back((*values)[ids[j]]);
      labels.push_back(gold.entity_of[ids[j]]);
      local[ids[j]] = static_cast<ValueId>(j);
    }
    auto sub_values = std::make_shared<const ValueTable>(ValueTable::from_strings(strings));
    std::vector<Group> groups;
    for (std::size_t c : shares[i]) {
      Group g;
      for (ValueId v : clusters.clusters()[c].members) g.push_back(local[v]);
      groups.push_back(std::move(g));
    }
    GoldPartition sub_gold(Partition::from_labels(labels));
    SessionOptions so;
    so.params = users[i].params;
    so.global = opts.global;
    so.columns = opts.columns;
    so.track_verification = opts.check_gold_sequence;
    CleaningSession session(sub_values, Partition::from_groups(ids.size(), std::move(groups)), so);
    SimulatedActor actor(sub_gold, users[i].params, opts.global, users[i].seed);
    drive_session(session, actor);
    auto result = session.result();
    report.session_seconds[i] = result.total_seconds;
    for (const auto& c : result.partition.clusters()) {
      Group g;
      for (ValueId v : c.members) g.push_back(ids[v]);
      outputs[i].push_back(std::move(g));
    }
    for (const auto& a : result.verification.assertions()) {
      evidence[i].push_back(PairAssertion::make(ids[a.a], ids[a.b], a.polarity));
    }
  });
  for (std::size_t i = 0; i < k; ++i) {
    report.busy_seconds[i] += report.session_seconds[i];
    report.split_merge_seconds = std::max(report.split_merge_seconds, report.session_seconds[i]);
  }

  VerificationSet verification;
  for (const auto& e : evidence) verification.record(e);
  std::vector<Group> final_clusters;
  if (k == 1) {
    final_clusters = std::move(outputs[0]);
  } else {
    MultiUserMergeOptions mo;
    mo.columns = opts.columns;
    mo.track_verification = opts.check_gold_sequence;
    mo.similarity = matrix.config();
    mo.threads = opts.threads;
    std::vector<UserParams> params;
    for (const auto& u : users) params.push_back(u.params);
    auto merged = multi_user_merge(*values, outputs, gold, params, mo);
    report.multi_user_seconds = merged.seconds;
    report.rounds = std::move(merged.rounds);
    for (std::size_t i = 0; i < k; ++i) report.busy_seconds[i] += merged.busy_seconds[i];
    verification.merge(merged.verification);
    final_clusters = std::move(merged.clusters);
  }
  report.partition = Partition::from_groups(values->size(), std::move(final_clusters));
  report.wall_seconds =
      report.calibration_seconds + report.split_merge_seconds + report.multi_user_seconds;
  const auto pr = precision_recall(report.partition, gold);
  report.precision = pr.precision;
  report.recall = pr.recall;
  report.gold_sequence = opts.check_gold_sequence && is_gold_sequence(verification, gold);
  return report;
}

}  // namespace valnorm
