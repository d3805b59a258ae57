#include "valnorm/procedures.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>

#include "valnorm/error.hpp"

namespace valnorm {

namespace {

std::string fold(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

void all_pairs_match(const Group& g, std::vector<PairAssertion>& out) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = i + 1; j < g.size(); ++j) out.push_back(PairAssertion::match(g[i], g[j]));
  }
}

void cross_non_match(const Group& a, const Group& b, std::vector<PairAssertion>& out) {
  for (ValueId x : a) {
    for (ValueId y : b) out.push_back(PairAssertion::non_match(x, y));
  }
}

Error mismatch(const std::string& what) { return Error(ErrorCode::kActionMismatch, what); }

}  // namespace

void sort_alphabetically(const ValueTable& values, std::vector<ValueId>& ids) {
  std::unordered_map<ValueId, std::string> key;
  key.reserve(ids.size());
  for (ValueId v : ids) key.emplace(v, fold(values[v]));
  std::sort(ids.begin(), ids.end(), [&](ValueId a, ValueId b) {
    const auto& ka = key.at(a);
    const auto& kb = key.at(b);
    if (ka != kb) return ka < kb;
    if (values[a] != values[b]) return values[a] < values[b];
    return a < b;
  });
}

void OpTally::find_dom(double size, int stm_capacity) {
  if (size <= stm_capacity) {
    find_dom_small += size;
  } else {
    find_dom_large_calls += 1;
    find_dom_large_sq += size * size;
  }
}

double OpTally::seconds(const UserParams& u) const {
  return focus * u.focus + select * u.select + match * u.match + memorize * u.memorize +
         recall * u.recall + is_pure_calls * u.is_pure_offset +
         is_pure_examined * u.is_pure_slope + find_dom_small * u.find_dom_linear +
         find_dom_large_calls * u.find_dom_offset + find_dom_large_sq * u.find_dom_quadratic;
}

bool OpTally::valid() const {
  for (double x : {focus, select, match, memorize, recall, is_pure_calls, is_pure_examined,
                   find_dom_small, find_dom_large_calls, find_dom_large_sq}) {
    if (!std::isfinite(x) || x < 0.0) return false;
  }
  return true;
}

OpTally& OpTally::operator+=(const OpTally& o) {
  focus += o.focus;
  select += o.select;
  match += o.match;
  memorize += o.memorize;
  recall += o.recall;
  is_pure_calls += o.is_pure_calls;
  is_pure_examined += o.is_pure_examined;
  find_dom_small += o.find_dom_small;
  find_dom_large_calls += o.find_dom_large_calls;
  find_dom_large_sq += o.find_dom_large_sq;
  return *this;
}

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::kSplitting: return "splitting";
    case Phase::kLocalMerge: return "localMerge";
    case Phase::kGlobalMerge: return "globalMerge";
    case Phase::kDone: return "done";
  }
  return "";
}

std::string_view task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kIsPureQuestion: return "isPureQuestion";
    case TaskKind::kFindDomAndMark: return "findDomAndMark";
    case TaskKind::kMarkValues: return "markValues";
    case TaskKind::kLocalMergeScan: return "localMergeScan";
    case TaskKind::kGlobalMergeGrid: return "globalMergeGrid";
  }
  return "";
}

TaskKind parse_task_kind(std::string_view name) {
  for (auto k : {TaskKind::kIsPureQuestion, TaskKind::kFindDomAndMark, TaskKind::kMarkValues,
                 TaskKind::kLocalMergeScan, TaskKind::kGlobalMergeGrid}) {
    if (task_kind_name(k) == name) return k;
  }
  throw Error(ErrorCode::kParse, "unknown task kind '" + std::string(name) + "'");
}

std::string_view button_name(Button button) {
  switch (button) {
    case Button::kYes: return "yes";
    case Button::kNo: return "no";
    case Button::kMarkValues: return "markValues";
    case Button::kCleanMixed: return "cleanMixed";
    case Button::kCreateCleanNew: return "createCleanNew";
    case Button::kCreateNewCleanOld: return "createNewCleanOld";
    case Button::kDoneLocalMerging: return "doneLocalMerging";
    case Button::kGlobalMerge: return "globalMerge";
  }
  return "";
}

Button parse_button(std::string_view name) {
  for (auto b : {Button::kYes, Button::kNo, Button::kMarkValues, Button::kCleanMixed,
                 Button::kCreateCleanNew, Button::kCreateNewCleanOld, Button::kDoneLocalMerging,
                 Button::kGlobalMerge}) {
    if (button_name(b) == name) return b;
  }
  throw Error(ErrorCode::kParse, "unknown button '" + std::string(name) + "'");
}

CleaningSession::CleaningSession(std::shared_ptr<const ValueTable> values, Partition input,
                                 SessionOptions opts)
    : values_(std::move(values)), input_(std::move(input)), opts_(std::move(opts)) {
  if (!values_) throw Error(ErrorCode::kInvalidArgument, "session needs a value table");
  if (input_.value_count() != values_->size()) {
    throw Error(ErrorCode::kValueTableMismatch, "partition covers " +
                                                    std::to_string(input_.value_count()) +
                                                    " values, table has " +
                                                    std::to_string(values_->size()));
  }
  if (opts_.columns < 2) throw Error(ErrorCode::kInvalidArgument, "grid needs at least 2 columns");
  opts_.params.validate();
  opts_.global.validate();
  for (const auto& c : input_.clusters()) queue_.push_back(c.members);
  advance();
}

CleaningSession CleaningSession::replay(std::shared_ptr<const ValueTable> values, Partition input,
                                        SessionOptions opts, std::span<const Action> actions) {
  CleaningSession s(std::move(values), std::move(input), std::move(opts));
  for (const auto& a : actions) s.apply(a);
  return s;
}

CleaningSession::MergeRun CleaningSession::make_run(std::vector<Group> groups) const {
  std::vector<ValueId> reps;
  std::unordered_map<ValueId, std::size_t> owner;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const ValueId r = representative(*values_, groups[i]);
    reps.push_back(r);
    owner[r] = i;
  }
  sort_alphabetically(*values_, reps);
  MergeRun run;
  for (ValueId r : reps) run.list.push_back({r, std::move(groups[owner[r]])});
  return run;
}

std::optional<Task> CleaningSession::merge_task(const MergeRun& run, bool nested) const {
  Task t;
  t.nested = nested;
  t.round = run.round;
  if (!run.local_done) {
    if (run.list.empty()) return std::nullopt;
    t.kind = TaskKind::kLocalMergeScan;
    for (const auto& item : run.list) t.values.push_back(item.rep);
    t.buttons = {Button::kDoneLocalMerging};
    return t;
  }
  if (run.list.size() <= 1) return std::nullopt;
  t.kind = TaskKind::kGlobalMergeGrid;
  const std::size_t width = std::min(opts_.columns, run.list.size());
  for (std::size_t i = 0; i < run.list.size(); ++i) {
    (i < width ? t.columns : t.values).push_back(run.list[i].rep);
  }
  t.buttons = {Button::kGlobalMerge};
  return t;
}

void CleaningSession::split_next(Group g) {
  if (g.size() == 1) {
    pure_.push_back(std::move(g));
    return;
  }
  std::vector<ValueId> ordered = std::move(g);
  sort_alphabetically(*values_, ordered);
  split_ = SplitWork{std::move(ordered), SplitStep::kIsPure};
}

void CleaningSession::advance() {
  task_.reset();
  for (;;) {
    if (phase_ == Phase::kSplitting) {
      if (nested_) {
        if (auto t = merge_task(*nested_, true)) {
          task_ = std::move(t);
          break;
        }
        for (auto& item : nested_->list) nested_->output.push_back(std::move(item.members));
        for (auto& g : nested_->output) pure_.push_back(std::move(g));
        nested_.reset();
        continue;
      }
      if (split_) {
        Task t;
        t.values = split_->values;
        switch (split_->step) {
          case SplitStep::kIsPure:
            t.kind = TaskKind::kIsPureQuestion;
            t.buttons = {Button::kYes, Button::kNo};
            break;
          case SplitStep::kFindDom:
            t.kind = TaskKind::kFindDomAndMark;
            t.buttons = {Button::kMarkValues, Button::kCleanMixed};
            break;
          case SplitStep::kMark:
            t.kind = TaskKind::kMarkValues;
            t.buttons = {Button::kCreateCleanNew, Button::kCreateNewCleanOld};
            break;
        }
        task_ = std::move(t);
        break;
      }
      if (!queue_.empty()) {
        Group g = std::move(queue_.front());
        queue_.pop_front();
        split_next(std::move(g));
        continue;
      }
      top_ = make_run(pure_);
      phase_ = Phase::kLocalMerge;
      continue;
    }
    if (phase_ == Phase::kLocalMerge || phase_ == Phase::kGlobalMerge) {
      if (auto t = merge_task(top_, false)) {
        phase_ = t->kind == TaskKind::kLocalMergeScan ? Phase::kLocalMerge : Phase::kGlobalMerge;
        task_ = std::move(t);
        break;
      }
      if (!top_.local_done) {
        top_.local_done = true;
        phase_ = Phase::kGlobalMerge;
        continue;
      }
      for (auto& item : top_.list) top_.output.push_back(std::move(item.members));
      top_.list.clear();
      phase_ = Phase::kDone;
    }
    break;
  }
  if (task_) {
    task_->id = events_.size();
    task_->clusters_remaining = queue_.size() + (split_ ? 1 : 0);
  }
}

void CleaningSession::check_shown(std::span<const ValueId> ids) const {
  std::set<ValueId> shown(task_->values.begin(), task_->values.end());
  shown.insert(task_->columns.begin(), task_->columns.end());
  for (ValueId v : ids) {
    if (!shown.count(v)) throw mismatch("value " + std::to_string(v) + " is not shown in this task");
  }
}

std::vector<PairAssertion> CleaningSession::apply_local(MergeRun& run, const Action& a) const {
  std::unordered_map<ValueId, std::size_t> pos;
  for (std::size_t i = 0; i < run.list.size(); ++i) pos[run.list[i].rep] = i;
  UnionFind uf(run.list.size());
  std::vector<PairAssertion> out;
  std::set<std::size_t> sources;
  for (auto [later, earlier] : a.links) {
    auto li = pos.find(later), ei = pos.find(earlier);
    if (li == pos.end() || ei == pos.end()) throw mismatch("link references a value not in the list");
    if (ei->second >= li->second) throw mismatch("a link must point to an earlier value");
    if (opts_.simulation && !sources.insert(li->second).second) {
      throw mismatch("value " + std::to_string(later) + " is linked twice");
    }
    uf.unite(li->second, ei->second);
    out.push_back(PairAssertion::match(later, earlier));
  }
  if (opts_.simulation) {
    // The earlier value is still in memory only if fewer than `capacity`
    // other entities were read after it.
    for (auto [later, earlier] : a.links) {
      std::set<std::size_t> between;
      for (std::size_t k = pos[earlier] + 1; k < pos[later]; ++k) between.insert(uf.find(k));
      if (between.size() >= static_cast<std::size_t>(opts_.params.stm_capacity)) {
        throw Error(ErrorCode::kLinkOutOfWindow,
                    "link " + std::to_string(later) + " -> " + std::to_string(earlier) +
                        " spans " + std::to_string(between.size()) + " other entities");
      }
    }
  }
  std::vector<std::vector<std::size_t>> groups(run.list.size());
  for (std::size_t i = 0; i < run.list.size(); ++i) groups[uf.find(i)].push_back(i);
  std::vector<Group> merged;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    Group members;
    for (std::size_t i : g) {
      members.insert(members.end(), run.list[i].members.begin(), run.list[i].members.end());
    }
    merged.push_back(std::move(members));
  }
  // Consolidated list: one representative per linked set, re-sorted.
  std::vector<Item> items;
  for (auto& m : merged) {
    std::vector<ValueId> reps;
    for (ValueId v : m) {
      if (pos.count(v)) reps.push_back(v);
    }
    items.push_back({representative(*values_, reps), std::move(m)});
  }
  std::vector<ValueId> order;
  std::unordered_map<ValueId, std::size_t> owner;
  for (std::size_t i = 0; i < items.size(); ++i) {
    order.push_back(items[i].rep);
    owner[items[i].rep] = i;
  }
  sort_alphabetically(*values_, order);
  run.list.clear();
  for (ValueId r : order) run.list.push_back(std::move(items[owner[r]]));
  run.local_done = true;
  return out;
}

std::vector<PairAssertion> CleaningSession::apply_grid(MergeRun& run, const Action& a) const {
  const std::size_t width = std::min(opts_.columns, run.list.size());
  std::unordered_map<ValueId, std::size_t> pos;
  for (std::size_t i = 0; i < run.list.size(); ++i) pos[run.list[i].rep] = i;
  UnionFind uf(run.list.size());
  std::set<std::size_t> checked;
  std::vector<PairAssertion> out;
  for (auto [column, value] : a.checks) {
    auto ci = pos.find(column), vi = pos.find(value);
    if (ci == pos.end() || vi == pos.end()) throw mismatch("check references a value not in the grid");
    if (ci->second >= width) throw mismatch("value " + std::to_string(column) + " is not a column");
    if (vi->second <= ci->second) {
      throw mismatch("a column can only be checked under an earlier column");
    }
    if (!checked.insert(vi->second).second) {
      throw Error(ErrorCode::kBoxConflict,
                  "value " + std::to_string(value) + " is checked more than once");
    }
    uf.unite(ci->second, vi->second);
    out.push_back(PairAssertion::match(column, value));
  }
  std::set<std::pair<ValueId, ValueId>> seen;
  for (std::size_t c = 0; c < width; ++c) {
    for (std::size_t i = 0; i < run.list.size(); ++i) {
      if (uf.find(i) == uf.find(c)) continue;
      const auto p = PairAssertion::non_match(run.list[c].rep, run.list[i].rep);
      if (seen.emplace(p.a, p.b).second) out.push_back(p);
    }
  }
  std::vector<Group> finished(run.list.size());
  std::vector<Item> rest;
  for (std::size_t i = 0; i < run.list.size(); ++i) {
    const std::size_t root = uf.find(i);
    if (root < width) {
      auto& g = finished[root];
      g.insert(g.end(), run.list[i].members.begin(), run.list[i].members.end());
    } else {
      rest.push_back(std::move(run.list[i]));
    }
  }
  for (std::size_t c = 0; c < width; ++c) {
    if (!finished[c].empty()) run.output.push_back(std::move(finished[c]));
  }
  run.list = std::move(rest);
  ++run.round;
  return out;
}

const Event& CleaningSession::apply(const Action& a) {
  if (!task_) throw Error(ErrorCode::kSessionDone, "session is complete");
  if (a.task_id != task_->id) {
    throw Error(ErrorCode::kStaleTask, "task " + std::to_string(a.task_id) +
                                           " is not pending (expected " +
                                           std::to_string(task_->id) + ")");
  }
  if (std::find(task_->buttons.begin(), task_->buttons.end(), a.button) == task_->buttons.end()) {
    throw mismatch("button '" + std::string(button_name(a.button)) + "' is not offered by " +
                   std::string(task_kind_name(task_->kind)));
  }
  if (!a.ops.valid()) throw mismatch("operation counts must be finite and >= 0");
  if (a.elapsed_seconds && !(*a.elapsed_seconds > 0.0 && *a.elapsed_seconds < 600.0)) {
    throw mismatch("elapsed seconds must lie in (0, 600)");
  }
  const bool merge_kind =
      task_->kind == TaskKind::kLocalMergeScan || task_->kind == TaskKind::kGlobalMergeGrid;
  if (!a.marked.empty() && task_->kind != TaskKind::kMarkValues) {
    throw mismatch("only markValues tasks take marked values");
  }
  if (!a.links.empty() && task_->kind != TaskKind::kLocalMergeScan) {
    throw mismatch("only localMergeScan tasks take links");
  }
  if (!a.checks.empty() && task_->kind != TaskKind::kGlobalMergeGrid) {
    throw mismatch("only globalMergeGrid tasks take checked boxes");
  }

  // Compute the successor state on copies so a rejected action leaves the
  // session untouched.
  std::vector<PairAssertion> added;
  std::optional<SplitWork> next_split = split_;
  std::optional<MergeRun> next_nested;
  std::optional<MergeRun> next_top;
  std::vector<Group> finalized;
  if (merge_kind) {
    MergeRun run = task_->nested ? *nested_ : top_;
    added = task_->kind == TaskKind::kLocalMergeScan ? apply_local(run, a) : apply_grid(run, a);
    (task_->nested ? next_nested : next_top) = std::move(run);
  } else {
    const Group& c = split_->values;
    switch (task_->kind) {
      case TaskKind::kIsPureQuestion:
        if (a.button == Button::kYes) {
          all_pairs_match(c, added);
          finalized.push_back(c);
          next_split.reset();
        } else {
          next_split->step = SplitStep::kFindDom;
        }
        break;
      case TaskKind::kFindDomAndMark:
        if (a.button == Button::kMarkValues) {
          next_split->step = SplitStep::kMark;
        } else {
          std::vector<Group> singles;
          for (ValueId v : c) singles.push_back({v});
          next_nested = make_run(std::move(singles));
          next_split.reset();
        }
        break;
      case TaskKind::kMarkValues: {
        check_shown(a.marked);
        std::set<ValueId> marked(a.marked.begin(), a.marked.end());
        if (marked.size() != a.marked.size()) throw mismatch("a value is marked twice");
        if (marked.empty() || marked.size() == c.size()) {
          throw mismatch("marked values must be a non-empty proper subset of the cluster");
        }
        Group in, out;
        for (ValueId v : c) (marked.count(v) ? in : out).push_back(v);
        // createCleanNew keeps the unmarked values; the other button keeps the marked.
        Group& keep = a.button == Button::kCreateCleanNew ? out : in;
        Group& rest = a.button == Button::kCreateCleanNew ? in : out;
        all_pairs_match(keep, added);
        cross_non_match(keep, rest, added);
        finalized.push_back(keep);
        if (rest.size() == 1) {
          finalized.push_back(rest);
          next_split.reset();
        } else {
          next_split = SplitWork{rest, SplitStep::kIsPure};
        }
        break;
      }
      default:
        break;
    }
  }

  std::size_t added_count = 0;
  if (opts_.track_verification) added_count = verification_.record(added);

  // Commit.
  const TaskKind kind = task_->kind;
  const bool nested = task_->nested;
  if (merge_kind) {
    if (nested) {
      nested_ = std::move(next_nested);
    } else {
      top_ = std::move(*next_top);
    }
  } else {
    split_ = std::move(next_split);
    if (next_nested) nested_ = std::move(next_nested);
    for (auto& g : finalized) pure_.push_back(std::move(g));
  }
  const bool real_time = !opts_.simulation && a.elapsed_seconds.has_value();
  const double charged = real_time ? *a.elapsed_seconds : a.ops.seconds(opts_.params);
  total_seconds_ += charged;
  const std::size_t slot = nested || !merge_kind ? 0 : kind == TaskKind::kLocalMergeScan ? 1 : 2;
  phase_seconds_[slot] += charged;

  Event e;
  e.sequence = events_.size();
  e.kind = kind;
  e.action = a;
  e.charged_seconds = charged;
  e.assertions_added = added_count;
  events_.push_back(std::move(e));
  advance();
  events_.back().phase_after = phase_;
  return events_.back();
}

SessionResult CleaningSession::result() const {
  if (!done()) throw Error(ErrorCode::kIncompleteSession, "session is not complete");
  SessionResult r;
  r.partition = Partition::from_groups(values_->size(), top_.output);
  r.total_seconds = total_seconds_;
  r.phase_seconds = phase_seconds_;
  r.verification = verification_;
  return r;
}

}  // namespace valnorm
