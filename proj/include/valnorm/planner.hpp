#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "valnorm/costmodel.hpp"
#include "valnorm/hac.hpp"

namespace valnorm {

/// {1..min(n, limit)} plus n; {1} for an empty dataset.
std::vector<std::size_t> default_caps(std::size_t value_count, std::size_t limit = 100);

struct PlanReport {
  std::vector<PlanEstimate> estimates;  // ascending by estimated seconds, ties by cap
  std::size_t selected_cap = 1;
};

/// HAC outputs for a set of candidate caps, computed once and priced for any
/// parameter set.
class PlanSpace {
 public:
  /// Caps are de-duplicated; a cap of zero or an empty set is rejected.
  PlanSpace(const SimilarityMatrix& matrix, std::span<const std::size_t> caps,
            unsigned threads = 0);

  const std::vector<std::size_t>& caps() const { return caps_; }
  /// Throws kInvalidArgument for a cap outside the candidate set.
  const Partition& partition(std::size_t cap) const;
  PlanReport price(const PurityModel& purity, const UserParams& u, const GlobalParams& g) const;

 private:
  std::vector<std::size_t> caps_;
  std::map<std::size_t, Partition> partitions_;
};

PlanReport search_plans(const SimilarityMatrix& matrix, std::span<const std::size_t> caps,
                        const PurityModel& purity, const UserParams& u, const GlobalParams& g,
                        unsigned threads = 0);

}  // namespace valnorm
