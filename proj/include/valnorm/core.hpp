#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace valnorm {

using ValueId = std::uint32_t;
using Group = std::vector<ValueId>;

/// The set of distinct strings being normalized. Ids are dense and follow
/// first-occurrence order of the raw input.
class ValueTable {
 public:
  ValueTable() = default;

  /// Deduplicates by exact string comparison. `duplicates` receives the
  /// number of dropped repeats.
  static ValueTable from_strings(std::span<const std::string> raw,
                                 std::size_t* duplicates = nullptr);

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  const std::string& operator[](ValueId id) const { return values_[id]; }
  const std::vector<std::string>& values() const { return values_; }
  std::optional<ValueId> find(std::string_view value) const;

  /// 64-bit FNV-1a over the ordered values; used to key stored datasets.
  std::uint64_t fingerprint() const;

  bool operator==(const ValueTable& other) const {
    return values_ == other.values_;
  }

 private:
  std::vector<std::string> values_;
  std::unordered_map<std::string, ValueId> index_;
};

struct Cluster {
  int id = 0;
  std::vector<ValueId> members;
};

/// Disjoint clusters covering every value id in [0, value_count).
class Partition {
 public:
  Partition() = default;
  /// Throws Error(kInvalidArgument) on overlap, gaps, empty clusters or
  /// out-of-range ids.
  Partition(std::size_t value_count, std::vector<Cluster> clusters);

  static Partition singletons(std::size_t value_count);
  static Partition from_labels(std::span<const int> labels);
  static Partition from_groups(std::size_t value_count, std::vector<Group> groups);

  std::size_t value_count() const { return value_count_; }
  std::size_t size() const { return clusters_.size(); }
  const std::vector<Cluster>& clusters() const { return clusters_; }

  /// Cluster position (not id) for every value.
  std::vector<std::size_t> cluster_index() const;

  /// Members sorted, clusters ordered by smallest member, ids renumbered 0..m-1.
  Partition canonical() const;

  /// True when both partitions group the values identically.
  bool same_grouping(const Partition& other) const;

 private:
  std::size_t value_count_ = 0;
  std::vector<Cluster> clusters_;
};

struct GoldPartition {
  GoldPartition() = default;
  explicit GoldPartition(Partition p);

  Partition partition;
  std::vector<int> entity_of;  // value id -> gold cluster id
};

/// Number of intra-cluster pairs, sum of C(|c|, 2).
std::uint64_t match_set_size(const Partition& partition);

struct PrecisionRecall {
  double precision = 1.0;
  double recall = 1.0;
  std::uint64_t candidate_matches = 0;
  std::uint64_t gold_matches = 0;
  std::uint64_t correct_matches = 0;
};

/// Pairwise precision/recall by contingency counting. Empty denominators
/// yield 1.0.
PrecisionRecall precision_recall(const Partition& candidate, const GoldPartition& gold);

enum class Polarity : std::uint8_t { kMatch, kNonMatch };

struct PairAssertion {
  ValueId a = 0;
  ValueId b = 0;
  Polarity polarity = Polarity::kMatch;

  /// Orders the pair so that a < b. Throws Error(kInvalidArgument) on a == b.
  static PairAssertion make(ValueId x, ValueId y, Polarity polarity);
  static PairAssertion match(ValueId x, ValueId y) { return make(x, y, Polarity::kMatch); }
  static PairAssertion non_match(ValueId x, ValueId y) {
    return make(x, y, Polarity::kNonMatch);
  }

  std::uint64_t key() const { return (std::uint64_t{a} << 32) | b; }
  bool operator==(const PairAssertion&) const = default;
};

/// Accumulated match/non-match evidence. Insertion order is preserved so
/// exports and replays are byte-stable.
class VerificationSet {
 public:
  /// Adds the assertion; returns false when it was already present.
  /// Throws Error(kConflictingEvidence) when the pair exists with the other
  /// polarity.
  bool record(const PairAssertion& assertion);
  /// All-or-nothing: a conflict anywhere leaves the set unchanged.
  std::size_t record(std::span<const PairAssertion> assertions);
  void merge(const VerificationSet& other);

  std::optional<Polarity> polarity(ValueId x, ValueId y) const;
  bool contains(const PairAssertion& assertion) const;

  std::size_t size() const { return ordered_.size(); }
  bool empty() const { return ordered_.empty(); }
  std::size_t match_count() const { return matches_; }
  std::size_t non_match_count() const { return ordered_.size() - matches_; }
  const std::vector<PairAssertion>& assertions() const { return ordered_; }

 private:
  std::vector<PairAssertion> ordered_;
  std::unordered_map<std::uint64_t, Polarity> index_;
  std::size_t matches_ = 0;
};

/// Functional form of VerificationSet::record.
VerificationSet record_assertions(VerificationSet vs, std::span<const PairAssertion> added);

/// Union-find closure of match evidence with non-match edges lifted to
/// component pairs. Edges are re-keyed on every union, so queries need only
/// two root lookups.
class TransitivityIndex {
 public:
  explicit TransitivityIndex(std::size_t value_count = 0);

  static TransitivityIndex build(std::size_t value_count, const VerificationSet& vs);

  void add_match(ValueId x, ValueId y);
  void add_non_match(ValueId x, ValueId y);
  void add(const PairAssertion& assertion);

  bool can_infer(const PairAssertion& query) const;
  bool same_component(ValueId x, ValueId y) const;
  bool separated(ValueId x, ValueId y) const;

  ValueId component_of(ValueId v) const;
  std::size_t component_count() const { return components_; }
  std::size_t non_match_edge_count() const { return edge_count_; }
  /// Components as sorted member lists, ordered by smallest member.
  std::vector<Group> components() const;
  std::size_t value_count() const { return parent_.size(); }

 private:
  ValueId find(ValueId v) const;

  mutable std::vector<ValueId> parent_;
  std::vector<std::uint32_t> rank_;
  std::vector<std::unordered_set<ValueId>> adjacent_;  // keyed by root
  std::size_t components_ = 0;
  std::size_t edge_count_ = 0;
};

/// Every gold match and gold non-match is either asserted or inferable.
/// Decided by comparing match components with gold clusters and counting
/// distinct component-level non-match edges.
bool is_gold_sequence(const VerificationSet& vs, const GoldPartition& gold);

/// Longest member string, ties broken by smallest id.
ValueId representative(const ValueTable& values, std::span<const ValueId> members);

}  // namespace valnorm
