#include "valnorm/serialize.hpp"

#include <string>

#include "valnorm/error.hpp"

namespace valnorm {

namespace {

template <typename T>
T get(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::kParse, std::string("field '") + key + "' is missing or has the wrong type");
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = get<T>(j, key);
}

void expect_object(const Json& j, const char* what) {
  if (!j.is_object()) throw Error(ErrorCode::kParse, std::string(what) + " must be a JSON object");
}

Json id_values(const std::vector<ValueId>& ids, const ValueTable& values) {
  Json out = Json::array();
  for (ValueId v : ids) out.push_back({{"id", v}, {"value", values[v]}});
  return out;
}

std::vector<std::pair<ValueId, ValueId>> pairs(const Json& j, const char* key) {
  std::vector<std::pair<ValueId, ValueId>> out;
  if (!j.contains(key)) return out;
  const Json& arr = j.at(key);
  if (!arr.is_array()) throw Error(ErrorCode::kParse, std::string("field '") + key + "' must be an array");
  for (const auto& p : arr) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number_unsigned() || !p[1].is_number_unsigned()) {
      throw Error(ErrorCode::kParse, std::string("entries of '") + key + "' must be [id, id] pairs");
    }
    out.emplace_back(p[0].get<ValueId>(), p[1].get<ValueId>());
  }
  return out;
}

Json pairs_json(const std::vector<std::pair<ValueId, ValueId>>& ps) {
  Json out = Json::array();
  for (auto [a, b] : ps) out.push_back(Json::array({a, b}));
  return out;
}

}  // namespace

const Json& require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::kParse, std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

Json to_json(const UserParams& u) {
  return {{"focus", u.focus},
          {"select", u.select},
          {"match", u.match},
          {"memorize", u.memorize},
          {"recall", u.recall},
          {"is_pure_slope", u.is_pure_slope},
          {"is_pure_offset", u.is_pure_offset},
          {"find_dom_linear", u.find_dom_linear},
          {"find_dom_quadratic", u.find_dom_quadratic},
          {"find_dom_offset", u.find_dom_offset},
          {"stm_capacity", u.stm_capacity},
          {"columns", u.columns},
          {"row_fraction", u.row_fraction}};
}

UserParams params_from_json(const Json& j, UserParams u) {
  expect_object(j, "params");
  read(j, "focus", u.focus);
  read(j, "select", u.select);
  read(j, "match", u.match);
  read(j, "memorize", u.memorize);
  read(j, "recall", u.recall);
  read(j, "is_pure_slope", u.is_pure_slope);
  read(j, "is_pure_offset", u.is_pure_offset);
  read(j, "find_dom_linear", u.find_dom_linear);
  read(j, "find_dom_quadratic", u.find_dom_quadratic);
  read(j, "find_dom_offset", u.find_dom_offset);
  read(j, "stm_capacity", u.stm_capacity);
  read(j, "columns", u.columns);
  read(j, "row_fraction", u.row_fraction);
  u.validate();
  return u;
}

Json to_json(const PurityModel& p) { return {{"a", p.a}, {"b", p.b}}; }

PurityModel purity_from_json(const Json& j) {
  expect_object(j, "purity");
  PurityModel p;
  read(j, "a", p.a);
  read(j, "b", p.b);
  p.validate();
  return p;
}

Json to_json(const GlobalParams& g) {
  return {{"shrinkage", g.shrinkage},
          {"hit", g.hit},
          {"mixed_threshold", g.mixed_threshold},
          {"majority_threshold", g.majority_threshold}};
}

GlobalParams global_from_json(const Json& j) {
  expect_object(j, "global");
  GlobalParams g;
  read(j, "shrinkage", g.shrinkage);
  read(j, "hit", g.hit);
  read(j, "mixed_threshold", g.mixed_threshold);
  read(j, "majority_threshold", g.majority_threshold);
  g.validate();
  return g;
}

Json to_json(const OpTally& o) {
  return {{"focus", o.focus},
          {"select", o.select},
          {"match", o.match},
          {"memorize", o.memorize},
          {"recall", o.recall},
          {"is_pure_calls", o.is_pure_calls},
          {"is_pure_examined", o.is_pure_examined},
          {"find_dom_small", o.find_dom_small},
          {"find_dom_large_calls", o.find_dom_large_calls},
          {"find_dom_large_sq", o.find_dom_large_sq}};
}

OpTally ops_from_json(const Json& j) {
  expect_object(j, "ops");
  OpTally o;
  read(j, "focus", o.focus);
  read(j, "select", o.select);
  read(j, "match", o.match);
  read(j, "memorize", o.memorize);
  read(j, "recall", o.recall);
  read(j, "is_pure_calls", o.is_pure_calls);
  read(j, "is_pure_examined", o.is_pure_examined);
  read(j, "find_dom_small", o.find_dom_small);
  read(j, "find_dom_large_calls", o.find_dom_large_calls);
  read(j, "find_dom_large_sq", o.find_dom_large_sq);
  return o;
}

Json to_json(const CalibrationResult& r) {
  return {{"params", to_json(r.params)},
          {"purity", to_json(r.purity)},
          {"alpha_small", r.alpha_small},
          {"alpha_large", r.alpha_large},
          {"total_seconds", r.total_seconds},
          {"notes", r.notes}};
}

CalibrationResult calibration_from_json(const Json& j) {
  expect_object(j, "calibration");
  CalibrationResult r;
  r.params = params_from_json(require(j, "params"));
  r.purity = purity_from_json(require(j, "purity"));
  read(j, "alpha_small", r.alpha_small);
  read(j, "alpha_large", r.alpha_large);
  read(j, "total_seconds", r.total_seconds);
  read(j, "notes", r.notes);
  return r;
}

CalibrationObservation observation_from_json(const Json& j) {
  expect_object(j, "observation");
  CalibrationObservation o;
  o.seconds = get<double>(j, "elapsed_seconds");
  read(j, "answer", o.answer);
  read(j, "marked", o.marked);
  return o;
}

Json to_json(const Action& a) {
  Json j{{"task", a.task_id},
         {"button", std::string(button_name(a.button))},
         {"marked", a.marked},
         {"links", pairs_json(a.links)},
         {"checks", pairs_json(a.checks)},
         {"ops", to_json(a.ops)}};
  if (a.elapsed_seconds) j["elapsed_seconds"] = *a.elapsed_seconds;
  return j;
}

Action action_from_json(const Json& j) {
  expect_object(j, "action");
  Action a;
  a.task_id = get<std::size_t>(j, "task");
  a.button = parse_button(get<std::string>(j, "button"));
  read(j, "marked", a.marked);
  a.links = pairs(j, "links");
  a.checks = pairs(j, "checks");
  if (j.contains("ops")) a.ops = ops_from_json(j.at("ops"));
  if (j.contains("elapsed_seconds")) a.elapsed_seconds = get<double>(j, "elapsed_seconds");
  return a;
}

Json to_json(const MergeScanAction& a) {
  Json j{{"task", a.task_id}, {"matches", pairs_json(a.matches)}, {"ops", to_json(a.ops)}};
  if (a.elapsed_seconds) j["elapsed_seconds"] = *a.elapsed_seconds;
  return j;
}

MergeScanAction merge_action_from_json(const Json& j) {
  expect_object(j, "action");
  MergeScanAction a;
  a.task_id = get<std::size_t>(j, "task");
  a.matches = pairs(j, "matches");
  if (j.contains("ops")) a.ops = ops_from_json(j.at("ops"));
  if (j.contains("elapsed_seconds")) a.elapsed_seconds = get<double>(j, "elapsed_seconds");
  return a;
}

Json task_view(const Task& t, const ValueTable& values) {
  Json buttons = Json::array();
  for (Button b : t.buttons) buttons.push_back(std::string(button_name(b)));
  return {{"id", t.id},
          {"kind", std::string(task_kind_name(t.kind))},
          {"nested", t.nested},
          {"values", id_values(t.values, values)},
          {"columns", id_values(t.columns, values)},
          {"buttons", buttons},
          {"progress", {{"clusters_remaining", t.clusters_remaining}, {"round", t.round}}}};
}

Json task_view(const CalibrationTask& t, const ValueTable& values) {
  return {{"id", t.index},
          {"kind", std::string(calibration_kind_name(t.kind))},
          {"values", id_values(t.values, values)},
          {"cap", t.cap}};
}

Json task_view(const MergeScanTask& t, const ValueTable& values) {
  return {{"id", t.id},
          {"kind", "mergeScan"},
          {"round", t.round},
          {"list", t.list},
          {"memorize_columns", t.memorize_columns},
          {"columns", id_values(t.columns, values)},
          {"rows", id_values(t.rows, values)}};
}

namespace {

std::vector<ValueId> view_ids(const Json& j, const char* key) {
  std::vector<ValueId> out;
  if (!j.contains(key)) return out;
  for (const auto& e : j.at(key)) out.push_back(get<ValueId>(e, "id"));
  return out;
}

}  // namespace

Task task_from_view(const Json& j) {
  expect_object(j, "task");
  Task t;
  t.id = get<std::size_t>(j, "id");
  t.kind = parse_task_kind(get<std::string>(j, "kind"));
  read(j, "nested", t.nested);
  t.values = view_ids(j, "values");
  t.columns = view_ids(j, "columns");
  for (const auto& b : require(j, "buttons")) t.buttons.push_back(parse_button(b.get<std::string>()));
  if (j.contains("progress")) {
    read(j.at("progress"), "clusters_remaining", t.clusters_remaining);
    read(j.at("progress"), "round", t.round);
  }
  return t;
}

CalibrationTask calibration_task_from_view(const Json& j) {
  expect_object(j, "task");
  CalibrationTask t;
  t.index = get<std::size_t>(j, "id");
  t.kind = parse_calibration_kind(get<std::string>(j, "kind"));
  t.values = view_ids(j, "values");
  read(j, "cap", t.cap);
  return t;
}

MergeScanTask merge_task_from_view(const Json& j) {
  expect_object(j, "task");
  MergeScanTask t;
  t.id = get<std::size_t>(j, "id");
  read(j, "round", t.round);
  read(j, "list", t.list);
  read(j, "memorize_columns", t.memorize_columns);
  t.columns = view_ids(j, "columns");
  t.rows = view_ids(j, "rows");
  return t;
}

Json to_json(const CalibrationObservation& o, std::size_t task_index) {
  return {{"task", task_index}, {"answer", o.answer}, {"marked", o.marked}, {"elapsed_seconds", o.seconds}};
}

Json to_json(const PlanEstimate& e) {
  return {{"cap", e.cap},
          {"purity", e.purity},
          {"estimated_seconds", e.estimated_seconds},
          {"split_seconds", e.split_seconds},
          {"local_merge_seconds", e.local_merge_seconds},
          {"global_merge_seconds", e.global_merge_seconds},
          {"split_output", e.split_output},
          {"local_merge_output", e.local_merge_output}};
}

Json to_json(const PlanReport& r) {
  Json estimates = Json::array();
  for (const auto& e : r.estimates) estimates.push_back(to_json(e));
  return {{"selected_cap", r.selected_cap}, {"estimates", estimates}};
}

}  // namespace valnorm
