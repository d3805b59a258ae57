#pragma once

#include <json.hpp>

#include "valnorm/calibration.hpp"
#include "valnorm/costmodel.hpp"
#include "valnorm/multiuser.hpp"
#include "valnorm/planner.hpp"
#include "valnorm/procedures.hpp"

namespace valnorm {

using Json = nlohmann::json;

// Readers start from the defaults and override the keys present, so partial
// objects are accepted. Wrong types raise kParse.

Json to_json(const UserParams& u);
UserParams params_from_json(const Json& j, UserParams base = {});
Json to_json(const PurityModel& p);
PurityModel purity_from_json(const Json& j);
Json to_json(const GlobalParams& g);
GlobalParams global_from_json(const Json& j);
Json to_json(const OpTally& ops);
OpTally ops_from_json(const Json& j);

Json to_json(const CalibrationResult& r);
CalibrationResult calibration_from_json(const Json& j);
/// `seconds` comes from the "elapsed_seconds" key.
CalibrationObservation observation_from_json(const Json& j);

Json to_json(const Action& a);
Action action_from_json(const Json& j);
Json to_json(const MergeScanAction& a);
MergeScanAction merge_action_from_json(const Json& j);

/// Task views carry value strings next to ids.
Json task_view(const Task& t, const ValueTable& values);
Json task_view(const CalibrationTask& t, const ValueTable& values);
Json task_view(const MergeScanTask& t, const ValueTable& values);
/// Inverses of task_view for clients; value strings are ignored.
Task task_from_view(const Json& j);
CalibrationTask calibration_task_from_view(const Json& j);
MergeScanTask merge_task_from_view(const Json& j);
Json to_json(const CalibrationObservation& o, std::size_t task_index);

Json to_json(const PlanEstimate& e);
Json to_json(const PlanReport& r);

/// Required key accessor that raises kParse naming the key.
const Json& require(const Json& j, const char* key);

}  // namespace valnorm
