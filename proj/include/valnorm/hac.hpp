#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "valnorm/core.hpp"

namespace valnorm {

enum class Linkage { kSingle, kComplete, kAverage };

std::string_view linkage_name(Linkage linkage);
Linkage parse_linkage(std::string_view name);

struct SimilarityConfig {
  int gram_size = 3;
  double stop_threshold = 0.3;
  Linkage linkage = Linkage::kAverage;
  bool pad = true;        // gram_size-1 sentinel characters on both ends
  bool case_fold = true;  // ASCII lower-casing before gram extraction

  void validate() const;
};

/// Sorted, de-duplicated gram codes of one string.
using GramSet = std::vector<std::uint64_t>;

GramSet gram_set(std::string_view s, const SimilarityConfig& cfg);
/// Readable grams (sentinels shown as '^' and '$'); for tests and debugging.
std::vector<std::string> grams(std::string_view s, const SimilarityConfig& cfg);

double jaccard(const GramSet& a, const GramSet& b);
/// |G(a) ∩ G(b)| / |G(a) ∪ G(b)|. Two empty gram sets compare 1.0 iff the
/// folded strings are equal.
double jaccard(std::string_view a, std::string_view b, const SimilarityConfig& cfg = {});

struct MergeStep {
  std::size_t step = 0;
  ValueId cluster_a = 0;  // cluster ids are the smallest member id
  ValueId cluster_b = 0;
  double similarity = 0.0;
  std::size_t max_cluster_size = 1;  // running maximum after this step

  bool operator==(const MergeStep&) const = default;
};

using MergeTrace = std::vector<MergeStep>;

struct HacResult {
  Partition partition;
  MergeTrace trace;
};

/// Pairwise value similarities, computed once and shared between runs.
class SimilarityMatrix {
 public:
  SimilarityMatrix(const ValueTable& values, const SimilarityConfig& cfg);

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return sim_[i * n_ + j]; }
  const std::vector<double>& data() const { return sim_; }
  const SimilarityConfig& config() const { return cfg_; }

 private:
  std::size_t n_ = 0;
  SimilarityConfig cfg_;
  std::vector<double> sim_;
};

/// Greedy agglomeration: repeatedly merge the most similar admissible pair
/// (similarity >= stop_threshold, merged size <= cap). Ties go to the pair
/// with the smaller lower cluster id, then the smaller upper cluster id.
/// `cap` of nullopt runs the uncapped variant.
HacResult run_hac(const ValueTable& values, const SimilarityConfig& cfg,
                  std::optional<std::size_t> cap = std::nullopt);
HacResult run_hac(const SimilarityMatrix& matrix, std::optional<std::size_t> cap = std::nullopt);

/// Resume point for one cap inside the uncapped trace.
struct Checkpoint {
  std::size_t cap = 1;
  std::size_t prefix_length = 0;
  std::vector<ValueId> cluster_of;  // value id -> cluster id after the prefix
};

/// Last trace step whose running maximum cluster size is still <= cap.
Checkpoint make_checkpoint(const MergeTrace& uncapped, std::size_t value_count, std::size_t cap);

/// Runs uncapped agglomeration once, then resumes each capped variant from
/// its checkpoint. Every entry equals run_hac(values, cfg, cap).
std::map<std::size_t, HacResult> run_joint(const ValueTable& values, const SimilarityConfig& cfg,
                                           std::span<const std::size_t> caps,
                                           unsigned threads = 0);
std::map<std::size_t, HacResult> run_joint(const SimilarityMatrix& matrix,
                                           std::span<const std::size_t> caps,
                                           unsigned threads = 0);

struct ClusterStats {
  std::size_t cluster_count = 0;
  std::map<std::size_t, std::size_t> size_histogram;  // size -> number of clusters
  std::size_t max_size = 0;

  bool operator==(const ClusterStats&) const = default;
};

ClusterStats cluster_stats(const Partition& partition);

/// `step,a,b,sim,maxsize` records, one per line.
void write_trace(std::ostream& out, const MergeTrace& trace);

}  // namespace valnorm
