#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "valnorm/calibration.hpp"
#include "valnorm/core.hpp"
#include "valnorm/costmodel.hpp"
#include "valnorm/procedures.hpp"

namespace valnorm {

struct SyntheticUser {
  UserParams params;
  std::uint64_t seed = 0;
};

/// Deterministic per seed. Operation costs are drawn uniformly from fixed
/// ranges; the large-cluster findDom terms follow from the linear one.
SyntheticUser generate_user(std::uint64_t seed, int stm_capacity = 7);

/// Seed of the i-th user in a run seeded with `seed`.
std::uint64_t user_seed(std::uint64_t seed, std::size_t index);

/// Short-term memory of (entity, value) pairs, oldest first. Memorizing an
/// entity already present replaces its value and makes it the newest pair.
class Stm {
 public:
  struct Slot {
    int entity = 0;
    ValueId value = 0;
    bool operator==(const Slot&) const = default;
  };
  struct Step {
    std::optional<ValueId> matched;  // previous value of the same entity
    std::optional<Slot> evicted;
  };

  explicit Stm(std::size_t capacity);
  Step memorize(int entity, ValueId value);
  std::optional<ValueId> recall(int entity) const;
  const std::deque<Slot>& slots() const { return slots_; }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<Slot> slots_;
};

/// Answers cleaning tasks truthfully from the gold partition, tallying the
/// operations a user performs.
class SimulatedActor {
 public:
  SimulatedActor(const GoldPartition& gold, const UserParams& user, const GlobalParams& global,
                 std::uint64_t seed);
  Action act(const Task& task);

 private:
  int entity(ValueId v) const { return gold_->entity_of[v]; }

  const GoldPartition* gold_;
  UserParams user_;
  GlobalParams global_;
  std::mt19937_64 rng_;
  std::vector<ValueId> last_cluster_;
  int dominating_ = -1;
};

struct SimulationOptions {
  std::size_t columns = 3;
  bool check_gold_sequence = true;  // keep the verification set and test it against gold
};

struct SimulationReport {
  double total_seconds = 0.0;
  std::array<double, 3> phase_seconds{};
  std::size_t event_count = 0;
  double precision = 0.0;
  double recall = 0.0;
  bool gold_sequence = false;  // only meaningful with check_gold_sequence
  Partition partition;
};

/// Throws kGoldCoverage when gold and values disagree in size.
SimulationReport simulate_session(std::shared_ptr<const ValueTable> values, const Partition& input,
                                  const GoldPartition& gold, const SyntheticUser& user,
                                  const GlobalParams& global, const SimulationOptions& opts = {});

/// Drives an existing session to completion; returns the number of actions applied.
std::size_t drive_session(CleaningSession& session, SimulatedActor& actor);

struct MonteCarloStats {
  std::size_t users = 0;
  double mean_seconds = 0.0;
  double min_seconds = 0.0;
  double max_seconds = 0.0;
  bool all_correct = true;  // precision = recall = 1 for every user
  std::vector<double> seconds;  // per user, in user order
};

MonteCarloStats monte_carlo(std::shared_ptr<const ValueTable> values, const Partition& input,
                            const GoldPartition& gold, std::size_t users, std::uint64_t seed,
                            const GlobalParams& global, unsigned threads = 0,
                            const SimulationOptions& opts = {});

/// Noiseless answer to a calibration task.
CalibrationObservation calibration_observation(const CalibrationTask& task,
                                               const GoldPartition& gold, const UserParams& user);

/// Plans calibration on `values`, answers every task with the synthetic user
/// and fits. `base` supplies the uncalibrated constants.
CalibrationResult simulate_calibration(const ValueTable& values, const GoldPartition& gold,
                                       const UserParams& user, const UserParams& base,
                                       const CalibrationOptions& opts = {},
                                       const SimilarityConfig& cfg = {});
CalibrationResult simulate_calibration(const SimilarityMatrix& matrix, const GoldPartition& gold,
                                       const UserParams& user, const UserParams& base,
                                       const CalibrationOptions& opts = {});

}  // namespace valnorm
