#include "valnorm/planner.hpp"

#include <algorithm>
#include <string>

#include "valnorm/error.hpp"

namespace valnorm {

std::vector<std::size_t> default_caps(std::size_t value_count, std::size_t limit) {
  std::vector<std::size_t> caps;
  for (std::size_t c = 1; c <= std::min(value_count, limit); ++c) caps.push_back(c);
  if (value_count > limit) caps.push_back(value_count);
  if (caps.empty()) caps.push_back(1);
  return caps;
}

PlanSpace::PlanSpace(const SimilarityMatrix& matrix, std::span<const std::size_t> caps,
                     unsigned threads)
    : caps_(caps.begin(), caps.end()) {
  std::sort(caps_.begin(), caps_.end());
  caps_.erase(std::unique(caps_.begin(), caps_.end()), caps_.end());
  if (caps_.empty()) throw Error(ErrorCode::kInvalidArgument, "no candidate caps");
  if (caps_.front() == 0) throw Error(ErrorCode::kInvalidArgument, "caps must be at least 1");
  for (auto& [cap, run] : run_joint(matrix, caps_, threads)) {
    partitions_.emplace(cap, std::move(run.partition));
  }
}

const Partition& PlanSpace::partition(std::size_t cap) const {
  auto it = partitions_.find(cap);
  if (it == partitions_.end()) {
    throw Error(ErrorCode::kInvalidArgument, "cap " + std::to_string(cap) + " is not a candidate");
  }
  return it->second;
}

PlanReport PlanSpace::price(const PurityModel& purity, const UserParams& u,
                            const GlobalParams& g) const {
  purity.validate();
  u.validate();
  g.validate();
  PlanReport report;
  for (const auto& [cap, partition] : partitions_) {
    report.estimates.push_back(cost_plan(partition, purity, cap, u, g));
  }
  std::stable_sort(report.estimates.begin(), report.estimates.end(),
                   [](const PlanEstimate& a, const PlanEstimate& b) {
                     return a.estimated_seconds < b.estimated_seconds;
                   });
  report.selected_cap = report.estimates.front().cap;
  return report;
}

PlanReport search_plans(const SimilarityMatrix& matrix, std::span<const std::size_t> caps,
                        const PurityModel& purity, const UserParams& u, const GlobalParams& g,
                        unsigned threads) {
  return PlanSpace(matrix, caps, threads).price(purity, u, g);
}

}  // namespace valnorm
