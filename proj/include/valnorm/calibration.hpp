#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "valnorm/core.hpp"
#include "valnorm/costmodel.hpp"
#include "valnorm/hac.hpp"

namespace valnorm {

enum class CalibrationKind {
  kMatchPair,     // yes/no on two values
  kPurityMark,    // mark every value of the dominating entity
  kIsPureCluster, // yes/no on one cluster
  kFindDomSmall,  // pick a dominating-entity value, cluster fits in memory
  kFindDomLarge,  // same, cluster larger than memory
};

std::string_view calibration_kind_name(CalibrationKind kind);
CalibrationKind parse_calibration_kind(std::string_view name);

struct CalibrationTask {
  std::size_t index = 0;
  CalibrationKind kind = CalibrationKind::kMatchPair;
  std::vector<ValueId> values;
  std::size_t cap = 0;       // HAC cap the cluster was drawn from (purity marks)
  bool synthesized = false;  // cluster assembled from random values, not from HAC output
};

struct CalibrationObservation {
  double seconds = 0.0;
  bool answer = false;           // yes/no tasks
  std::vector<ValueId> marked;   // purity marks; the picked value for findDom
};

struct CalibrationOptions {
  std::uint64_t seed = 1;
  int stm_capacity = 7;
  std::size_t tasks_per_kind = 3;
  std::size_t small_cap = 10;
  std::size_t large_cap = 20;
};

struct CalibrationPlan {
  std::vector<CalibrationTask> tasks;
  std::vector<std::string> notes;  // fallbacks taken while sampling
};

/// Purity-mark tasks: up to three clusters of exactly `cap` values drawn at
/// random, otherwise the largest non-singleton clusters (repeating the
/// largest when fewer exist). Singleton-only input yields no tasks.
std::vector<CalibrationTask> sample_purity_clusters(const Partition& clusters, std::size_t cap,
                                                    std::size_t count, std::uint64_t seed,
                                                    std::vector<std::string>* notes = nullptr);

/// Builds the full task list: match pairs, purity marks for both caps,
/// isPure clusters, then small and large findDom clusters. Clusters come from
/// HAC(large_cap); missing sizes are synthesized from random values.
CalibrationPlan plan_calibration(const SimilarityMatrix& matrix, const CalibrationOptions& opts);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  bool singular = false;
};

/// Ordinary least squares y = slope·x + intercept. A zero-variance x yields
/// slope 0, intercept mean(y) and `singular` set.
LinearFit least_squares(std::span<const double> x, std::span<const double> y);

/// Log-log least squares of α on λ; b clamped to <= 0.
PurityModel fit_power_law(std::span<const double> caps, std::span<const double> purities);
/// Fit through (1, 1), (10, α10), (20, α20).
PurityModel fit_purity(double alpha10, double alpha20, std::size_t small_cap = 10,
                       std::size_t large_cap = 20);

/// ρ_m = mean(t - ρ_f - ρ_s), floored at zero.
double fit_match_cost(std::span<const double> seconds, const UserParams& base);

struct IsPureSample {
  double size = 0.0;
  bool pure = false;
  double seconds = 0.0;
};

struct IsPureFit {
  double slope = 0.0;   // γ
  double offset = 0.0;  // γ₀
  bool singular = false;
};

/// γ·α·ψ + γ₀ = t - ρ_f - ρ_s, with α = 1 for "yes" and α = purity(model, cap)
/// for "no".
IsPureFit fit_is_pure(std::span<const IsPureSample> samples, const PurityModel& model,
                      std::size_t cap, const UserParams& base);

struct FindDomSample {
  double size = 0.0;
  double seconds = 0.0;
};

struct FindDomFit {
  double linear = 0.0;     // η₁
  double quadratic = 0.0;  // η₂
  double offset = 0.0;     // η₃
  bool singular = false;
};

FindDomFit fit_find_dom(std::span<const FindDomSample> small, std::span<const FindDomSample> large,
                        const UserParams& base);

struct CalibrationResult {
  UserParams params;
  PurityModel purity;
  double alpha_small = 1.0;
  double alpha_large = 1.0;
  double total_seconds = 0.0;
  std::vector<std::string> notes;
};

/// Fits every parameter from completed observations. `base` supplies the
/// constants that are not calibrated (ρ_f, ρ_s, ρ_z, ρ_r, memory size).
CalibrationResult fit_calibration(std::span<const CalibrationTask> tasks,
                                  std::span<const CalibrationObservation> observations,
                                  const UserParams& base, const CalibrationOptions& opts = {});

/// Serves calibration tasks in order and collects observations.
class CalibrationSession {
 public:
  CalibrationSession(CalibrationPlan plan, UserParams base, CalibrationOptions opts);

  const std::vector<CalibrationTask>& tasks() const { return plan_.tasks; }
  const std::vector<std::string>& notes() const { return plan_.notes; }
  const std::vector<CalibrationObservation>& observations() const { return observations_; }

  bool done() const { return observations_.size() == plan_.tasks.size(); }
  /// Next unanswered task, or nullptr when done.
  const CalibrationTask* next() const;
  /// Throws kStaleTask when `task_index` is not the pending task and
  /// kActionMismatch when the observation does not fit the task.
  void submit(std::size_t task_index, CalibrationObservation observation);
  /// Throws kIncompleteSession before every task is answered.
  CalibrationResult result() const;

 private:
  CalibrationPlan plan_;
  UserParams base_;
  CalibrationOptions opts_;
  std::vector<CalibrationObservation> observations_;
};

}  // namespace valnorm
