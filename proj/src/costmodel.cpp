#include "valnorm/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "valnorm/error.hpp"

namespace valnorm {

namespace {

// Guards the explicit floors against representation error, e.g. 1/(3·⅓).
constexpr double kFloorSlack = 1e-9;

std::size_t floor_count(double x) {
  if (!(x > 0.0)) return 0;
  return static_cast<std::size_t>(std::floor(x + kFloorSlack));
}

double positive(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace

void UserParams::validate() const {
  const double times[] = {focus,         select,         match,           memorize,
                          recall,        is_pure_slope,  is_pure_offset,  find_dom_linear,
                          find_dom_quadratic, find_dom_offset};
  for (double t : times) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
      throw Error(ErrorCode::kInvalidArgument, "operation costs must be finite and >= 0");
    }
  }
  if (stm_capacity < 1) throw Error(ErrorCode::kInvalidArgument, "stm capacity must be >= 1");
  if (columns < 1) throw Error(ErrorCode::kInvalidArgument, "columns must be >= 1");
  if (!(row_fraction > 0.0 && row_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "row fraction must lie in (0, 1]");
  }
}

double UserParams::find_dom_cost(double size) const {
  if (size <= static_cast<double>(stm_capacity)) return find_dom_linear * size;
  return find_dom_quadratic * size * size + find_dom_offset;
}

void GlobalParams::validate() const {
  if (!(shrinkage > 0.0 && shrinkage < 1.0) && shrinkage != 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "shrinkage factor must lie in (0, 1]");
  }
  if (!(hit > 0.0 && hit <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "hit factor must lie in (0, 1]");
  }
  if (!(mixed_threshold < majority_threshold)) {
    throw Error(ErrorCode::kInvalidArgument, "mixed threshold must be below majority threshold");
  }
}

void PurityModel::validate() const {
  if (!(a > 0.0)) throw Error(ErrorCode::kInvalidArgument, "purity model needs a > 0");
  if (!(b <= 0.0)) throw Error(ErrorCode::kInvalidArgument, "purity model needs b <= 0");
}

double purity(const PurityModel& model, double cap) {
  if (!(cap >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "cap must be >= 1");
  const double alpha = model.a * std::pow(cap, model.b);
  return std::clamp(alpha, kMinPurity, 1.0);
}

std::size_t split_depth(double size, double alpha) {
  if (size <= 1.0 || alpha >= 1.0 - kMinPurity) return 0;
  const double depth = -std::log(size) / std::log1p(-alpha);
  const double bound = std::floor(size) - 1.0;
  return static_cast<std::size_t>(std::min(bound, std::floor(depth + kFloorSlack)));
}

std::string_view regime_name(SplitRegime regime) {
  switch (regime) {
    case SplitRegime::kMajority: return "majority";
    case SplitRegime::kMinority: return "minority";
    case SplitRegime::kMixed: return "mixed";
  }
  return "";
}

SplitRegime split_regime(double alpha, const GlobalParams& g) {
  if (alpha >= g.majority_threshold) return SplitRegime::kMajority;
  if (alpha >= g.mixed_threshold) return SplitRegime::kMinority;
  return SplitRegime::kMixed;
}

double cost_local_merge(double list_size, const UserParams& u, const GlobalParams& g) {
  const double r = positive(list_size);
  return r * u.memorize + r * (1.0 - g.shrinkage) * (3.0 * u.focus + 2.0 * u.select) + u.button();
}

double cost_global_merge(double list_size, const UserParams& u, const GlobalParams& g) {
  const double r = positive(list_size);
  const double k = u.columns;
  const std::size_t rounds = floor_count(1.0 / (k * g.hit));
  double total = 0.0;
  for (std::size_t j = 1; j <= rounds; ++j) {
    const double rows = r - k * static_cast<double>(j - 1) * g.hit * r - k;
    total += k * u.memorize + positive(rows) * u.recall +
             k * positive(g.hit * r - 1.0) * u.button() + u.button();
  }
  return total;
}

namespace {

double split_iterations(double size, double alpha, double marked_fraction, const UserParams& u) {
  const std::size_t beta = split_depth(size, alpha);
  double total = 0.0;
  double current = size;
  for (std::size_t j = 1; j <= beta; ++j) {
    total += u.is_pure_cost(current, alpha) + u.button();
    total += u.find_dom_cost(current) + u.button();
    total += current * (u.focus + u.match + marked_fraction * u.select) + u.button();
    current *= 1.0 - alpha;
  }
  return total;
}

double split_mixed(double size, double alpha, const UserParams& u, const GlobalParams& g) {
  const double k = u.columns;
  double total = u.is_pure_cost(size, alpha) + u.button();
  total += u.find_dom_cost(size) + u.button();
  total += cost_local_merge(size, u, g);
  const std::size_t beta = split_depth(size, alpha);
  const double list = g.shrinkage * size;
  for (std::size_t j = 1; j <= beta; ++j) {
    const double remaining = std::pow(1.0 - alpha, k * static_cast<double>(j - 1));
    double hits = 0.0;
    for (int c = 1; c <= u.columns; ++c) {
      hits += alpha * std::pow(1.0 - alpha, k * static_cast<double>(j - 1) + c) * list;
    }
    total += k * u.memorize + positive(k * remaining * list - k) * u.recall +
             positive(hits - 1.0) * u.button() + u.button();
  }
  return total;
}

}  // namespace

double cost_split_cluster(double size, double alpha, const UserParams& u, const GlobalParams& g) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::kInvalidPurity, "purity must lie in (0, 1], got " + std::to_string(alpha));
  }
  if (!(size >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "cluster size must be >= 1");
  if (size <= 1.0) return 0.0;
  switch (split_regime(alpha, g)) {
    case SplitRegime::kMajority: return split_iterations(size, alpha, 1.0 - alpha, u);
    case SplitRegime::kMinority: return split_iterations(size, alpha, alpha, u);
    case SplitRegime::kMixed: return split_mixed(size, alpha, u, g);
  }
  return 0.0;
}

PlanEstimate cost_plan(const Partition& clusters, const PurityModel& model, std::size_t cap,
                       const UserParams& u, const GlobalParams& g) {
  PlanEstimate est;
  est.cap = cap;
  est.purity = purity(model, static_cast<double>(cap));
  est.stats = cluster_stats(clusters);
  est.per_cluster_seconds.reserve(clusters.size());
  for (const auto& c : clusters.clusters()) {
    const double size = static_cast<double>(c.members.size());
    const double seconds = cost_split_cluster(size, est.purity, u, g);
    est.per_cluster_seconds.push_back(seconds);
    est.split_seconds += seconds;
    est.split_output += static_cast<double>(split_depth(size, est.purity) + 1);
  }
  est.local_merge_output = g.shrinkage * est.split_output;
  est.local_merge_seconds = cost_local_merge(est.split_output, u, g);
  est.global_merge_seconds = cost_global_merge(est.local_merge_output, u, g);
  est.estimated_seconds = est.split_seconds + est.local_merge_seconds + est.global_merge_seconds;
  return est;
}

double cost_multi_user_merge(std::span<const double> list_sizes, std::span<const UserParams> users,
                             const GlobalParams& g, double row_fraction) {
  const std::size_t k = list_sizes.size();
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "multi-user merge needs at least two lists");
  if (users.size() != k) {
    throw Error(ErrorCode::kInvalidArgument, "multi-user merge needs one parameter set per list");
  }
  std::vector<double> lists(list_sizes.begin(), list_sizes.end());
  std::sort(lists.begin(), lists.end(), std::greater<>());

  const double kd = static_cast<double>(k);
  const double columns = 3.0;
  double total = 0.0;
  double merged = 0.0;  // R_{t-1}: entities already merged and removed
  for (std::size_t t = 1; t < k; ++t) {
    const double chosen = lists[t - 1];
    const double scans = chosen * (1.0 - merged * g.hit) / (columns * kd);
    const bool any = scans >= 0.0;
    const std::size_t upper = any ? floor_count(scans) : 0;
    double round = 0.0;
    for (const auto& u : users) {
      double seconds = 0.0;
      for (std::size_t i = 0; any && i <= upper; ++i) {
        double scan = columns * u.memorize;
        // Rows come from the lists not yet used as column sources.
        for (std::size_t j = t + 1; j <= k; ++j) {
          const double rows =
              row_fraction * lists[j - 1] *
              (1.0 - (merged + columns * static_cast<double>(i)) * g.hit);
          scan += (columns * g.hit + 1.0) * u.button() + positive(rows) * u.recall;
        }
        seconds += scan;
      }
      round = std::max(round, seconds);
    }
    total += round;
    if (any) merged += columns * static_cast<double>(upper + 1);
  }
  return total;
}

double cost_multi_user(std::span<const double> per_user_split_merge, double multi_user_merge) {
  if (per_user_split_merge.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "multi-user cost needs at least one user");
  }
  return *std::max_element(per_user_split_merge.begin(), per_user_split_merge.end()) +
         multi_user_merge;
}

}  // namespace valnorm
