#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "valnorm/core.hpp"
#include "valnorm/hac.hpp"

namespace valnorm {

/// Per-user operation costs in seconds. Defaults are the reference constants
/// used throughout the tests.
struct UserParams {
  double focus = 0.5;     // ρ_f
  double select = 0.5;    // ρ_s
  double match = 1.0;     // ρ_m
  double memorize = 0.4;  // ρ_z
  double recall = 0.4;    // ρ_r
  // isPure(ψ, α) = is_pure_slope·ψ·α + is_pure_offset
  double is_pure_slope = 0.2;
  double is_pure_offset = 0.5;
  // findDom(ψ) = find_dom_linear·ψ when ψ <= stm_capacity,
  //              find_dom_quadratic·ψ² + find_dom_offset otherwise
  double find_dom_linear = 0.3;
  double find_dom_quadratic = 0.3 / 700.0;
  double find_dom_offset = 0.99 * 0.3 * 7.0;
  int stm_capacity = 7;
  int columns = 3;
  double row_fraction = 1.0;  // μ, share of rows read per multi-user merge scan

  void validate() const;

  double button() const { return focus + select; }
  double is_pure_cost(double size, double purity) const {
    return is_pure_slope * size * purity + is_pure_offset;
  }
  double find_dom_cost(double size) const;

  bool operator==(const UserParams&) const = default;
};

struct GlobalParams {
  double shrinkage = 0.98;        // τ
  double hit = 0.1;               // ξ
  double mixed_threshold = 0.1;   // below: "clean mixed cluster"
  double majority_threshold = 0.5;

  void validate() const;
  bool operator==(const GlobalParams&) const = default;
};

/// α(λ) = a·λ^b, clamped to [kMinPurity, 1].
struct PurityModel {
  double a = 1.0;
  double b = 0.0;

  void validate() const;
  bool operator==(const PurityModel&) const = default;
};

inline constexpr double kMinPurity = 1e-6;

double purity(const PurityModel& model, double cap);

/// Number of splits β of a cluster of size ψ and purity α:
/// min(ψ-1, ⌊-ln ψ / ln(1-α)⌋), zero for singletons and pure clusters.
std::size_t split_depth(double size, double alpha);

enum class SplitRegime {
  kMajority,  // α >= majority threshold: mark the non-dominating values
  kMinority,  // mixed <= α < majority: mark the dominating values
  kMixed,     // α < mixed threshold: clean the cluster with a nested merge
};

std::string_view regime_name(SplitRegime regime);
SplitRegime split_regime(double alpha, const GlobalParams& g);

/// Expected seconds to clean one machine cluster with the split procedure.
/// Throws Error(kInvalidPurity) for α outside (0, 1].
double cost_split_cluster(double size, double alpha, const UserParams& u, const GlobalParams& g);

/// r·ρ_z + r(1-τ)(3ρ_f + 2ρ_s) + ρ_f + ρ_s
double cost_local_merge(double list_size, const UserParams& u, const GlobalParams& g);

/// ⌊1/(kξ)⌋ grid rounds of k columns each; negative row and check terms are
/// floored at zero per round.
double cost_global_merge(double list_size, const UserParams& u, const GlobalParams& g);

struct PlanEstimate {
  std::size_t cap = 1;
  double purity = 1.0;
  double estimated_seconds = 0.0;
  double split_seconds = 0.0;
  double local_merge_seconds = 0.0;
  double global_merge_seconds = 0.0;
  std::vector<double> per_cluster_seconds;
  double split_output = 0.0;        // r_λ = Σ(β_i + 1)
  double local_merge_output = 0.0;  // r'_λ = τ·r_λ
  ClusterStats stats;
};

/// Estimated human seconds for cleaning `clusters` (the output of HAC(cap)).
PlanEstimate cost_plan(const Partition& clusters, const PurityModel& model, std::size_t cap,
                       const UserParams& u, const GlobalParams& g);

/// Barrier-synchronized multi-user merge estimate. `list_sizes` holds one
/// representative-list length per user; the lists are processed longest
/// first. `users` must have the same length (k >= 2).
double cost_multi_user_merge(std::span<const double> list_sizes, std::span<const UserParams> users,
                             const GlobalParams& g, double row_fraction);

/// Slowest user's Split+Merge share plus the multi-user merge.
double cost_multi_user(std::span<const double> per_user_split_merge, double multi_user_merge);

}  // namespace valnorm
