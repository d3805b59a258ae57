#include "valnorm/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "valnorm/io.hpp"
#include "valnorm/log.hpp"

namespace valnorm {

namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string random_id() {
  std::random_device rd;
  std::uint64_t h = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  return hex64(h);
}

void write_file(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot write " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
T optional_field(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::kParse, std::string("field '") + key + "' has the wrong type");
  }
}

void check_elapsed(double seconds) {
  if (!(seconds > 0.0 && seconds < 600.0)) {
    throw Error(ErrorCode::kActionMismatch, "elapsed seconds must lie in (0, 600)");
  }
}

}  // namespace

struct Service::Dataset {
  std::string id;
  Json stored;
  std::shared_ptr<const ValueTable> values;
  std::optional<GoldPartition> gold;
  std::mutex mutex;
  std::shared_ptr<const SimilarityMatrix> matrix;
  std::map<std::vector<std::size_t>, std::shared_ptr<const PlanSpace>> spaces;

  std::shared_ptr<const SimilarityMatrix> similarity() {
    std::lock_guard lock(mutex);
    if (!matrix) matrix = std::make_shared<const SimilarityMatrix>(*values, SimilarityConfig{});
    return matrix;
  }
};

struct Service::Session {
  std::string id;
  Json create;
  std::string mode;
  std::shared_ptr<Dataset> dataset;
  std::unique_ptr<CalibrationSession> calibration;
  std::unique_ptr<MultiUserSession> pipeline;
  bool simulation = true;
  std::size_t actions = 0;
  bool broken = false;
  fs::path log;
  mutable std::mutex mutex;

  bool done() const { return calibration ? calibration->done() : pipeline->done(); }
  std::size_t users() const { return pipeline ? pipeline->users() : 1; }
};

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownDataset:
    case ErrorCode::kUnknownSession:
    case ErrorCode::kUnknownCalibration: return 404;
    case ErrorCode::kStaleTask:
    case ErrorCode::kSessionDone:
    case ErrorCode::kSessionNotDone:
    case ErrorCode::kSlotBlocked:
    case ErrorCode::kConflictingEvidence: return 409;
    case ErrorCode::kIo: return 500;
    default: return 400;
  }
}

Service::Service(ServiceOptions opts) : opts_(std::move(opts)) {
  if (!opts_.data_dir.empty()) load();
}

Service::~Service() = default;

Json Service::health() const {
  std::shared_lock lock(mutex_);
  return {{"status", "ok"}, {"datasets", datasets_.size()}, {"sessions", sessions_.size()}};
}

// ---- datasets ----------------------------------------------------------

std::shared_ptr<Service::Dataset> Service::add_dataset(const Json& stored, bool persist) {
  const Json& raw = require(stored, "values");
  if (!raw.is_array()) throw Error(ErrorCode::kParse, "'values' must be an array of strings");
  std::vector<std::string> strings;
  for (const auto& v : raw) {
    if (!v.is_string()) throw Error(ErrorCode::kParse, "'values' must be an array of strings");
    strings.push_back(v.get<std::string>());
  }
  auto d = std::make_shared<Dataset>();
  d->values = std::make_shared<const ValueTable>(ValueTable::from_strings(strings));
  const ValueTable& table = *d->values;
  std::uint64_t h = fnv1a(std::to_string(table.fingerprint()));
  Json canonical{{"values", Json::array()}, {"gold", nullptr}};
  for (std::size_t i = 0; i < table.size(); ++i) canonical["values"].push_back(table[static_cast<ValueId>(i)]);

  if (stored.contains("gold") && !stored.at("gold").is_null()) {
    const Json& gold = stored.at("gold");
    if (!gold.is_array() || gold.size() != strings.size()) {
      throw Error(ErrorCode::kGoldCoverage, "'gold' needs one label per input value");
    }
    std::map<std::string, int> label_ids;
    std::vector<int> labels(table.size(), -1);
    for (std::size_t i = 0; i < strings.size(); ++i) {
      const Json& l = gold[i];
      if (!l.is_string() && !l.is_number_integer()) {
        throw Error(ErrorCode::kParse, "gold labels must be strings or integers");
      }
      const std::string key = l.is_string() ? "s" + l.get<std::string>() : "i" + l.dump();
      const int label = label_ids.try_emplace(key, static_cast<int>(label_ids.size())).first->second;
      const ValueId v = *table.find(strings[i]);
      if (labels[v] != -1 && labels[v] != label) {
        throw Error(ErrorCode::kValueTableMismatch, "value '" + strings[i] + "' has two gold labels");
      }
      labels[v] = label;
    }
    d->gold.emplace(Partition::from_labels(labels));
    canonical["gold"] = labels;
    h = fnv1a(Json(labels).dump(), h);
  }
  d->id = hex64(h);
  d->stored = std::move(canonical);

  std::unique_lock lock(mutex_);
  if (auto it = datasets_.find(d->id); it != datasets_.end()) return it->second;
  if (persist && !opts_.data_dir.empty()) {
    write_file(opts_.data_dir / "datasets" / (d->id + ".json"), d->stored.dump());
  }
  datasets_.emplace(d->id, d);
  return d;
}

Json Service::create_dataset(const Json& body) {
  std::size_t raw_size = require(body, "values").size();
  auto d = add_dataset(body, true);
  return {{"id", d->id},
          {"size", d->values->size()},
          {"duplicates", raw_size - d->values->size()},
          {"has_gold", d->gold.has_value()}};
}

std::shared_ptr<Service::Dataset> Service::dataset(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = datasets_.find(id);
  if (it == datasets_.end()) throw Error(ErrorCode::kUnknownDataset, "unknown dataset '" + id + "'");
  return it->second;
}

Json Service::get_dataset(const std::string& id) const {
  auto d = dataset(id);
  return {{"id", d->id},
          {"size", d->values->size()},
          {"has_gold", d->gold.has_value()},
          {"values", d->stored.at("values")}};
}

std::shared_ptr<const PlanSpace> Service::plan_space(Dataset& d, std::vector<std::size_t> caps) const {
  auto matrix = d.similarity();
  std::sort(caps.begin(), caps.end());
  caps.erase(std::unique(caps.begin(), caps.end()), caps.end());
  std::lock_guard lock(d.mutex);
  auto& slot = d.spaces[caps];
  if (!slot) slot = std::make_shared<const PlanSpace>(*matrix, caps, opts_.threads);
  return slot;
}

// ---- calibrations and plans -------------------------------------------

void Service::register_calibration(const std::string& id, const CalibrationResult& r) {
  std::unique_lock lock(mutex_);
  if (calibrations_.count(id)) return;
  if (!opts_.data_dir.empty()) {
    write_file(opts_.data_dir / "calibrations" / (id + ".json"), to_json(r).dump());
  }
  calibrations_.emplace(id, r);
}

Json Service::import_calibration(const Json& body) {
  const CalibrationResult r = calibration_from_json(body);
  const std::string id = hex64(fnv1a(to_json(r).dump()));
  register_calibration(id, r);
  return {{"id", id}, {"calibration", to_json(r)}};
}

Json Service::get_calibration(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = calibrations_.find(id);
  if (it == calibrations_.end()) {
    throw Error(ErrorCode::kUnknownCalibration, "unknown calibration '" + id + "'");
  }
  return {{"id", id}, {"calibration", to_json(it->second)}};
}

Json Service::plan(const Json& body) {
  auto d = dataset(optional_field<std::string>(body, "dataset", ""));
  UserParams params;
  PurityModel purity;
  if (body.contains("calibration")) {
    const auto c = calibration_from_json(
        get_calibration(optional_field<std::string>(body, "calibration", "")).at("calibration"));
    params = c.params;
    purity = c.purity;
  } else if (!body.contains("params")) {
    throw Error(ErrorCode::kMissingCalibration, "a plan needs a calibration or explicit params");
  }
  if (body.contains("params")) params = params_from_json(body.at("params"), params);
  if (body.contains("purity")) purity = purity_from_json(body.at("purity"));
  GlobalParams global;
  if (body.contains("global")) global = global_from_json(body.at("global"));
  auto caps = optional_field<std::vector<std::size_t>>(
      body, "caps", default_caps(d->values->size(), opts_.cap_limit));
  Json out = to_json(plan_space(*d, caps)->price(purity, params, global));
  out["dataset"] = d->id;
  return out;
}

// ---- sessions ------------------------------------------------------------

Json Service::resolve_create(const Json& body) const {
  if (!body.is_object()) throw Error(ErrorCode::kParse, "request body must be a JSON object");
  auto d = dataset(optional_field<std::string>(body, "dataset", ""));
  const auto mode = optional_field<std::string>(body, "mode", "");
  Json r{{"dataset", d->id},
         {"mode", mode},
         {"simulation", optional_field<bool>(body, "simulation", true)},
         {"columns", optional_field<std::size_t>(body, "columns", 3)}};
  if (r["columns"].get<std::size_t>() == 0) throw Error(ErrorCode::kInvalidArgument, "columns must be positive");
  GlobalParams global;
  if (body.contains("global")) global = global_from_json(body.at("global"));
  r["global"] = to_json(global);
  CalibrationOptions copts;
  copts.seed = optional_field<std::uint64_t>(body, "seed", copts.seed);
  copts.tasks_per_kind = optional_field<std::size_t>(body, "tasks_per_kind", copts.tasks_per_kind);
  r["calibration_options"] = {{"seed", copts.seed}, {"tasks_per_kind", copts.tasks_per_kind}};

  std::optional<CalibrationResult> fit;
  if (body.contains("calibration")) {
    fit = calibration_from_json(
        get_calibration(optional_field<std::string>(body, "calibration", "")).at("calibration"));
  }
  const UserParams base = body.contains("base") ? params_from_json(body.at("base")) : UserParams{};
  r["base"] = to_json(base);

  if (mode == "calibrate") {
    return r;
  }
  if (mode == "clean") {
    if (!fit && !body.contains("params")) {
      throw Error(ErrorCode::kMissingCalibration, "clean sessions need a calibration or explicit params");
    }
    UserParams params = fit ? fit->params : UserParams{};
    if (body.contains("params")) params = params_from_json(body.at("params"), params);
    PurityModel purity = fit ? fit->purity : PurityModel{};
    if (body.contains("purity")) purity = purity_from_json(body.at("purity"));
    std::size_t cap = optional_field<std::size_t>(body, "cap", 0);
    if (cap == 0 && body.contains("cap")) throw Error(ErrorCode::kInvalidArgument, "cap must be positive");
    if (cap == 0) {
      cap = plan_space(*d, default_caps(d->values->size(), opts_.cap_limit))
                ->price(purity, params, global)
                .selected_cap;
    }
    r["params"] = Json::array({to_json(params)});
    r["purity"] = to_json(purity);
    r["cap"] = cap;
    r["users"] = 1;
    r["calibrate"] = false;
    return r;
  }
  if (mode == "multiuser") {
    if (!body.contains("users")) throw Error(ErrorCode::kInvalidArgument, "multiuser sessions need 'users'");
    const auto k = optional_field<std::size_t>(body, "users", 0);
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "multiuser sessions need at least one user");
    r["users"] = k;
    r["calibrate"] = optional_field<bool>(body, "calibrate", true);
    Json params = Json::array();
    if (body.contains("params")) {
      const Json& p = body.at("params");
      if (p.is_array()) {
        if (p.size() != k) throw Error(ErrorCode::kInvalidArgument, "need one parameter set per user");
        for (const auto& u : p) params.push_back(to_json(params_from_json(u)));
      } else {
        const Json one = to_json(params_from_json(p));
        for (std::size_t i = 0; i < k; ++i) params.push_back(one);
      }
    } else if (fit) {
      for (std::size_t i = 0; i < k; ++i) params.push_back(to_json(fit->params));
    }
    r["params"] = params;
    if (body.contains("cap")) {
      const auto cap = optional_field<std::size_t>(body, "cap", 0);
      if (cap == 0) throw Error(ErrorCode::kInvalidArgument, "cap must be positive");
      r["cap"] = cap;
    }
    return r;
  }
  throw Error(ErrorCode::kInvalidArgument, "mode must be calibrate, clean or multiuser");
}

std::shared_ptr<Service::Session> Service::build_session(const std::string& id, const Json& create) const {
  auto s = std::make_shared<Session>();
  s->id = id;
  s->create = create;
  s->mode = create.at("mode").get<std::string>();
  s->dataset = dataset(create.at("dataset").get<std::string>());
  s->simulation = create.at("simulation").get<bool>();
  CalibrationOptions copts;
  copts.seed = create.at("calibration_options").at("seed").get<std::uint64_t>();
  copts.tasks_per_kind = create.at("calibration_options").at("tasks_per_kind").get<std::size_t>();
  const UserParams base = params_from_json(create.at("base"));
  copts.stm_capacity = base.stm_capacity;
  Dataset& d = *s->dataset;
  if (s->mode == "calibrate") {
    s->calibration = std::make_unique<CalibrationSession>(plan_calibration(*d.similarity(), copts), base, copts);
    return s;
  }
  MultiUserOptions o;
  o.users = create.at("users").get<std::size_t>();
  o.calibrate = create.at("calibrate").get<bool>();
  if (create.contains("cap")) o.cap = create.at("cap").get<std::size_t>();
  for (const auto& p : create.at("params")) o.params.push_back(params_from_json(p));
  o.calibration = copts;
  o.base = base;
  o.global = global_from_json(create.at("global"));
  o.columns = create.at("columns").get<std::size_t>();
  o.simulation = s->simulation;
  const auto caps = o.cap ? std::vector<std::size_t>{*o.cap}
                          : default_caps(d.values->size(), opts_.cap_limit);
  s->pipeline = std::make_unique<MultiUserSession>(d.values, d.similarity(), plan_space(d, caps), o);
  return s;
}

Json Service::create_session(const Json& body) {
  const Json create = resolve_create(body);
  std::string id;
  {
    std::shared_lock lock(mutex_);
    do id = random_id();
    while (sessions_.count(id));
  }
  auto s = build_session(id, create);
  if (!opts_.data_dir.empty()) {
    s->log = opts_.data_dir / "sessions" / (id + ".jsonl");
    append(*s, {{"type", "create"}, {"id", id}, {"request", create}});
  }
  {
    std::unique_lock lock(mutex_);
    sessions_.emplace(id, s);
  }
  log::info("session " + id + " created in " + s->mode + " mode");
  return {{"id", id}, {"mode", s->mode}, {"users", s->users()}, {"dataset", s->dataset->id}};
}

std::shared_ptr<Service::Session> Service::session(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::kUnknownSession, "unknown session '" + id + "'");
  return it->second;
}

void Service::append(const Session& s, const Json& record) const {
  if (s.log.empty()) return;
  std::ofstream out(s.log, std::ios::binary | std::ios::app);
  out << record.dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "cannot append to " + s.log.string());
}

double Service::apply(Session& s, std::size_t slot, const Json& body) const {
  if (!body.is_object()) throw Error(ErrorCode::kParse, "action must be a JSON object");
  if (slot >= s.users()) throw Error(ErrorCode::kInvalidArgument, "slot " + std::to_string(slot) + " out of range");
  auto calibration_observation = [&] {
    CalibrationObservation o = observation_from_json(body);
    if (!s.simulation) check_elapsed(o.seconds);
    if (!std::isfinite(o.seconds) || o.seconds < 0.0) {
      throw Error(ErrorCode::kActionMismatch, "elapsed seconds must be finite and non-negative");
    }
    return o;
  };
  if (s.calibration) {
    if (s.calibration->done()) throw Error(ErrorCode::kSessionDone, "calibration is finished");
    CalibrationObservation o = calibration_observation();
    const double seconds = o.seconds;
    s.calibration->submit(require(body, "task").get<std::size_t>(), std::move(o));
    return seconds;
  }
  MultiUserSession& p = *s.pipeline;
  if (body.contains("stage") && body.at("stage") != pipeline_stage_name(p.stage())) {
    throw Error(ErrorCode::kStaleTask, "session is " + std::string(pipeline_stage_name(p.stage())));
  }
  switch (p.stage()) {
    case PipelineStage::kCalibrating:
      return p.submit_calibration(slot, require(body, "task").get<std::size_t>(), calibration_observation());
    case PipelineStage::kCleaning:
      return p.submit_cleaning(slot, action_from_json(body));
    case PipelineStage::kMerging:
      return p.submit_merge(slot, merge_action_from_json(body));
    case PipelineStage::kDone: break;
  }
  throw Error(ErrorCode::kSessionDone, "session is finished");
}

Json Service::submit(const std::string& id, std::size_t slot, const Json& body) {
  auto s = session(id);
  std::unique_lock lock(s->mutex);
  if (s->broken) throw Error(ErrorCode::kIo, "session log is unwritable; restart the service to recover");
  const double charged = apply(*s, slot, body);
  try {
    append(*s, {{"type", "action"}, {"slot", slot}, {"body", body}});
  } catch (const Error&) {
    s->broken = true;
    throw;
  }
  ++s->actions;
  const bool done = s->done();
  lock.unlock();
  if (done && s->calibration) register_calibration(s->id, s->calibration->result());
  Json ack = next_task(id, slot);
  return {{"accepted", true},
          {"charged_seconds", charged},
          {"status", ack.at("status")},
          {"next_task", ack.contains("task") ? ack["task"].at("id") : Json(nullptr)}};
}

Json Service::next_task(const std::string& id, std::size_t slot) const {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  if (slot >= s->users()) throw Error(ErrorCode::kInvalidArgument, "slot " + std::to_string(slot) + " out of range");
  const ValueTable& values = *s->dataset->values;
  Json out{{"session", id}, {"slot", slot}};
  if (s->calibration) {
    out["stage"] = "calibrating";
    if (const CalibrationTask* t = s->calibration->next()) {
      out["status"] = "task";
      out["task"] = task_view(*t, values);
      out["task"]["progress"] = {{"answered", s->calibration->observations().size()},
                                 {"total", s->calibration->tasks().size()}};
    } else {
      out["status"] = "done";
      out["result"] = "/sessions/" + id + "/result";
    }
    return out;
  }
  const MultiUserSession& p = *s->pipeline;
  out["stage"] = pipeline_stage_name(p.stage());
  out["status"] = slot_status_name(p.status(slot));
  if (p.done()) {
    out["result"] = "/sessions/" + id + "/result";
  } else if (const CalibrationTask* t = p.calibration_task(slot)) {
    out["task"] = task_view(*t, values);
  } else if (auto t = p.cleaning_task(slot)) {
    out["task"] = task_view(*t, values);
    out["task"]["progress"]["phase"] = phase_name(p.cleaning_session(slot)->phase());
  } else if (const MergeScanTask* t = p.merge_task(slot)) {
    out["task"] = task_view(*t, values);
  }
  return out;
}

Json Service::session_info(const std::string& id) const {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  Json slots = Json::array();
  std::string stage = "calibrating";
  if (s->calibration) {
    slots.push_back(s->done() ? "done" : "task");
    if (s->done()) stage = "done";
  } else {
    stage = pipeline_stage_name(s->pipeline->stage());
    for (std::size_t i = 0; i < s->users(); ++i) slots.push_back(slot_status_name(s->pipeline->status(i)));
  }
  return {{"id", id},
          {"mode", s->mode},
          {"dataset", s->dataset->id},
          {"users", s->users()},
          {"simulation", s->simulation},
          {"stage", stage},
          {"done", s->done()},
          {"actions", s->actions},
          {"slots", slots}};
}

Json Service::report_json(const Session& s) const {
  const Dataset& d = *s.dataset;
  const PipelineReport r = s.pipeline->report(d.gold ? &*d.gold : nullptr);
  Json clusters = Json::array();
  for (const auto& c : r.partition.clusters()) {
    Json values = Json::array();
    for (ValueId v : c.members) values.push_back((*d.values)[v]);
    clusters.push_back({{"canonical", (*d.values)[representative(*d.values, c.members)]},
                        {"members", c.members},
                        {"values", values}});
  }
  Json out{{"session", s.id},
           {"mode", s.mode},
           {"dataset", d.id},
           {"users", r.users},
           {"cap", r.cap},
           {"calibrated", r.calibrated},
           {"wall_seconds", r.wall_seconds},
           {"calibration_seconds", r.calibration_seconds},
           {"split_merge_seconds", r.split_merge_seconds},
           {"multi_user_seconds", r.multi_user_seconds},
           {"busy_seconds", r.busy_seconds},
           {"rounds", r.rounds.size()},
           {"clusters", clusters}};
  if (r.calibrated) {
    out["planning_params"] = to_json(r.planning_params);
    out["purity"] = to_json(r.purity);
    out["estimated_seconds"] = r.estimated_seconds;
  }
  if (d.gold) {
    out["precision"] = r.precision;
    out["recall"] = r.recall;
    out["gold_sequence"] = r.gold_sequence;
  }
  return out;
}

Json Service::result(const std::string& id) const {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  if (!s->done()) throw Error(ErrorCode::kSessionNotDone, "session '" + id + "' is still running");
  if (s->calibration) {
    return {{"session", id},
            {"mode", s->mode},
            {"calibration_id", id},
            {"calibration", to_json(s->calibration->result())}};
  }
  return report_json(*s);
}

std::string Service::result_csv(const std::string& id) const {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  if (!s->done()) throw Error(ErrorCode::kSessionNotDone, "session '" + id + "' is still running");
  if (!s->pipeline) throw Error(ErrorCode::kInvalidArgument, "calibration sessions have no partition");
  const Dataset& d = *s->dataset;
  std::ostringstream out;
  io::write_partition(out, *d.values, s->pipeline->report().partition);
  return out.str();
}

// ---- persistence -----------------------------------------------------------

void Service::load() {
  for (const char* sub : {"datasets", "sessions", "calibrations"}) {
    std::error_code ec;
    fs::create_directories(opts_.data_dir / sub, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + (opts_.data_dir / sub).string() + ": " + ec.message());
  }
  auto sorted_entries = [&](const char* sub, const char* ext) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(opts_.data_dir / sub)) {
      if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  for (const auto& path : sorted_entries("datasets", ".json")) {
    try {
      add_dataset(Json::parse(read_file(path)), false);
    } catch (const std::exception& e) {
      log::warn("skipping dataset " + path.string() + ": " + e.what());
    }
  }
  for (const auto& path : sorted_entries("calibrations", ".json")) {
    try {
      calibrations_.emplace(path.stem().string(), calibration_from_json(Json::parse(read_file(path))));
    } catch (const std::exception& e) {
      log::warn("skipping calibration " + path.string() + ": " + e.what());
    }
  }
  for (const auto& path : sorted_entries("sessions", ".jsonl")) {
    const std::string text = read_file(path);
    std::vector<std::pair<Json, std::size_t>> records;  // record, end offset
    std::size_t pos = 0;
    std::size_t good_end = 0;
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      if (nl == std::string::npos) break;  // unterminated tail: a write cut short
      try {
        records.emplace_back(Json::parse(text.substr(pos, nl - pos)), nl + 1);
        good_end = nl + 1;
      } catch (const Json::exception&) {
        break;
      }
      pos = nl + 1;
    }
    if (good_end < text.size()) {
      log::warn("truncating damaged tail of " + path.string());
      fs::resize_file(path, good_end);
    }
    if (records.empty() || records[0].first.value("type", "") != "create") {
      log::warn("skipping session log without a create record: " + path.string());
      continue;
    }
    const std::string id = path.stem().string();
    std::shared_ptr<Session> s;
    try {
      s = build_session(id, records[0].first.at("request"));
    } catch (const std::exception& e) {
      log::warn("skipping session " + id + ": " + e.what());
      continue;
    }
    s->log = path;
    for (std::size_t i = 1; i < records.size(); ++i) {
      const Json& r = records[i].first;
      try {
        apply(*s, r.at("slot").get<std::size_t>(), r.at("body"));
        ++s->actions;
      } catch (const std::exception& e) {
        log::warn("session " + id + ": replay stopped at record " + std::to_string(i) + ": " + e.what());
        fs::resize_file(path, records[i - 1].second);
        break;
      }
    }
    if (s->calibration && s->calibration->done() && !calibrations_.count(id)) {
      calibrations_.emplace(id, s->calibration->result());
    }
    sessions_.emplace(id, s);
    log::info("replayed session " + id + " (" + std::to_string(s->actions) + " actions)");
  }
}

// ---- simulated client ----------------------------------------------------

SimulatedClient::SimulatedClient(const GoldPartition& gold, const SyntheticUser& user,
                                 const GlobalParams& global)
    : gold_(&gold), params_(user.params), actor_(gold, user.params, global, user.seed) {}

Json SimulatedClient::answer(const Json& next_task, bool real_time) {
  const std::string stage = require(next_task, "stage").get<std::string>();
  const Json& view = require(next_task, "task");
  auto elapsed = [&](double seconds) { return std::max(1e-3, seconds); };
  Json body;
  if (stage == "calibrating") {
    const auto t = calibration_task_from_view(view);
    body = to_json(calibration_observation(t, *gold_, params_), t.index);
  } else if (stage == "cleaning") {
    Action a = actor_.act(task_from_view(view));
    if (real_time) a.elapsed_seconds = elapsed(a.ops.seconds(params_));
    body = to_json(a);
  } else if (stage == "merging") {
    MergeScanAction a = simulate_merge_scan(merge_task_from_view(view), *gold_);
    if (real_time) a.elapsed_seconds = elapsed(a.ops.seconds(params_));
    body = to_json(a);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "no task to answer in stage '" + stage + "'");
  }
  body["stage"] = stage;
  return body;
}

// ---- HTTP ------------------------------------------------------------------

namespace {

template <typename Fn>
void respond(httplib::Response& res, Fn&& fn, int ok_status = 200) {
  auto error = [&](int status, std::string_view code, const std::string& message) {
    res.status = status;
    res.set_content(Json{{"error", code}, {"message", message}}.dump(), "application/json");
  };
  try {
    Json body = fn();
    res.status = ok_status;
    res.set_content(body.dump(), "application/json");
  } catch (const Error& e) {
    error(http_status(e.code()), error_code_name(e.code()), e.what());
  } catch (const Json::exception& e) {
    error(400, error_code_name(ErrorCode::kParse), e.what());
  } catch (const std::exception& e) {
    error(500, "Internal", e.what());
  }
}

Json parse_body(const httplib::Request& req) {
  try {
    return Json::parse(req.body);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("request body is not JSON: ") + e.what());
  }
}

std::size_t slot_param(const httplib::Request& req) {
  if (!req.has_param("slot")) return 0;
  const std::string v = req.get_param_value("slot");
  std::size_t out = 0;
  std::istringstream in(v);
  if (!(in >> out) || !in.eof()) throw Error(ErrorCode::kInvalidArgument, "slot must be a non-negative integer");
  return out;
}

}  // namespace

void install_routes(httplib::Server& server, Service& service) {
  server.Get("/health", [&](const httplib::Request&, httplib::Response& res) {
    respond(res, [&] { return service.health(); });
  });
  server.Post("/datasets", [&](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return service.create_dataset(parse_body(req)); }, 201);
  });
  server.Get(R"(/datasets/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return service.get_dataset(req.matches[1]); });
  });
  server.Post("/plans", [&](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return service.plan(parse_body(req)); });
  });
  server.Post("/calibrations", [&](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return service.import_calibration(parse_body(req)); }, 201);
  });
  server.Get(R"(/calibrations/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return service.get_calibration(req.matches[1]); });
  });
  server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return service.create_session(parse_body(req)); }, 201);
  });
  server.Get(R"(/sessions/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return service.session_info(req.matches[1]); });
  });
  server.Get(R"(/sessions/([^/]+)/task)", [&](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return service.next_task(req.matches[1], slot_param(req)); });
  });
  server.Post(R"(/sessions/([^/]+)/actions)", [&](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return service.submit(req.matches[1], slot_param(req), parse_body(req)); });
  });
  server.Get(R"(/sessions/([^/]+)/result)", [&](const httplib::Request& req, httplib::Response& res) {
    if (req.get_param_value("format") == "csv") {
      try {
        res.set_content(service.result_csv(req.matches[1]), "text/csv");
      } catch (const Error& e) {
        res.status = http_status(e.code());
        res.set_content(Json{{"error", error_code_name(e.code())}, {"message", e.what()}}.dump(),
                        "application/json");
      }
      return;
    }
    respond(res, [&] { return service.result(req.matches[1]); });
  });
}

}  // namespace valnorm
