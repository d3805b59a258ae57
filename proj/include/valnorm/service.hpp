#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "valnorm/error.hpp"
#include "valnorm/multiuser_session.hpp"
#include "valnorm/serialize.hpp"

namespace httplib {
class Server;
}

namespace valnorm {

struct ServiceOptions {
  std::filesystem::path data_dir;  // empty keeps everything in memory
  std::size_t cap_limit = 100;     // candidate caps are 1..limit plus n
  unsigned threads = 0;
};

/// Session store behind the HTTP API. Every method takes and returns JSON
/// bodies and reports failures as Error. Sessions persist as append-only
/// logs of their create request and accepted actions; the constructor
/// replays them.
class Service {
 public:
  explicit Service(ServiceOptions opts = {});
  ~Service();

  Json health() const;
  Json create_dataset(const Json& body);
  Json get_dataset(const std::string& id) const;
  Json plan(const Json& body);
  Json import_calibration(const Json& body);
  Json get_calibration(const std::string& id) const;

  Json create_session(const Json& body);
  Json session_info(const std::string& id) const;
  Json next_task(const std::string& id, std::size_t slot) const;
  Json submit(const std::string& id, std::size_t slot, const Json& body);
  Json result(const std::string& id) const;
  /// `value,cluster_id,canonical` rows in value order.
  std::string result_csv(const std::string& id) const;

 private:
  struct Dataset;
  struct Session;

  std::shared_ptr<Dataset> dataset(const std::string& id) const;
  std::shared_ptr<Session> session(const std::string& id) const;
  std::shared_ptr<const PlanSpace> plan_space(Dataset& d, std::vector<std::size_t> caps) const;
  std::shared_ptr<Dataset> add_dataset(const Json& stored, bool persist);
  Json resolve_create(const Json& body) const;
  std::shared_ptr<Session> build_session(const std::string& id, const Json& create) const;
  double apply(Session& s, std::size_t slot, const Json& body) const;
  void register_calibration(const std::string& id, const CalibrationResult& r);
  void append(const Session& s, const Json& record) const;
  void load();
  Json report_json(const Session& s) const;

  ServiceOptions opts_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Dataset>> datasets_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, CalibrationResult> calibrations_;
};

/// Answers served task views the way a truthful simulated user would, for
/// scripted clients and tests. One instance per user slot.
class SimulatedClient {
 public:
  SimulatedClient(const GoldPartition& gold, const SyntheticUser& user, const GlobalParams& global = {});
  /// Action body for a next-task response with status "task". With
  /// `real_time` the modelled seconds are sent as the elapsed time.
  Json answer(const Json& next_task, bool real_time = false);

 private:
  const GoldPartition* gold_;
  UserParams params_;
  SimulatedActor actor_;
};

/// HTTP status for an error code: 404 unknown ids, 409 state conflicts,
/// 500 storage failures, 400 otherwise.
int http_status(ErrorCode code);

/// Registers every endpoint of `service` on `server`.
void install_routes(httplib::Server& server, Service& service);

}  // namespace valnorm
