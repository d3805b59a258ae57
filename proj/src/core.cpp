#include "valnorm/core.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "valnorm/error.hpp"
#include "valnorm/log.hpp"

namespace valnorm {

// ---------------------------------------------------------------------------
// ValueTable

ValueTable ValueTable::from_strings(std::span<const std::string> raw, std::size_t* duplicates) {
  ValueTable table;
  std::size_t dropped = 0;
  table.values_.reserve(raw.size());
  for (const auto& s : raw) {
    auto [it, inserted] = table.index_.try_emplace(s, static_cast<ValueId>(table.values_.size()));
    if (inserted) {
      table.values_.push_back(s);
    } else {
      ++dropped;
    }
  }
  if (duplicates != nullptr) *duplicates = dropped;
  return table;
}

std::optional<ValueId> ValueTable::find(std::string_view value) const {
  auto it = index_.find(std::string(value));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t ValueTable::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const auto& v : values_) {
    for (unsigned char c : v) mix(c);
    mix(0xff);  // separator that cannot occur in UTF-8
  }
  return h;
}

// ---------------------------------------------------------------------------
// Partition

Partition::Partition(std::size_t value_count, std::vector<Cluster> clusters)
    : value_count_(value_count), clusters_(std::move(clusters)) {
  std::vector<char> seen(value_count_, 0);
  std::size_t covered = 0;
  for (const auto& c : clusters_) {
    if (c.members.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "partition contains an empty cluster");
    }
    for (ValueId v : c.members) {
      if (v >= value_count_) {
        throw Error(ErrorCode::kInvalidArgument,
                    "cluster member " + std::to_string(v) + " out of range");
      }
      if (seen[v]) {
        throw Error(ErrorCode::kInvalidArgument,
                    "value " + std::to_string(v) + " appears in two clusters");
      }
      seen[v] = 1;
      ++covered;
    }
  }
  if (covered != value_count_) {
    throw Error(ErrorCode::kInvalidArgument, "partition does not cover every value");
  }
}

Partition Partition::singletons(std::size_t value_count) {
  std::vector<Cluster> clusters(value_count);
  for (std::size_t i = 0; i < value_count; ++i) {
    clusters[i].id = static_cast<int>(i);
    clusters[i].members = {static_cast<ValueId>(i)};
  }
  return Partition(value_count, std::move(clusters));
}

Partition Partition::from_labels(std::span<const int> labels) {
  std::unordered_map<int, std::size_t> slot;
  std::vector<Cluster> clusters;
  for (std::size_t v = 0; v < labels.size(); ++v) {
    auto [it, inserted] = slot.try_emplace(labels[v], clusters.size());
    if (inserted) clusters.push_back(Cluster{labels[v], {}});
    clusters[it->second].members.push_back(static_cast<ValueId>(v));
  }
  return Partition(labels.size(), std::move(clusters));
}

Partition Partition::from_groups(std::size_t value_count, std::vector<Group> groups) {
  std::vector<Cluster> clusters;
  clusters.reserve(groups.size());
  int id = 0;
  for (auto& g : groups) clusters.push_back(Cluster{id++, std::move(g)});
  return Partition(value_count, std::move(clusters));
}

std::vector<std::size_t> Partition::cluster_index() const {
  std::vector<std::size_t> index(value_count_, 0);
  for (std::size_t i = 0; i < clusters_.size(); ++i) {
    for (ValueId v : clusters_[i].members) index[v] = i;
  }
  return index;
}

Partition Partition::canonical() const {
  std::vector<Cluster> out = clusters_;
  for (auto& c : out) std::sort(c.members.begin(), c.members.end());
  std::sort(out.begin(), out.end(),
            [](const Cluster& x, const Cluster& y) { return x.members.front() < y.members.front(); });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = static_cast<int>(i);
  Partition p;
  p.value_count_ = value_count_;
  p.clusters_ = std::move(out);
  return p;
}

bool Partition::same_grouping(const Partition& other) const {
  if (value_count_ != other.value_count_ || clusters_.size() != other.clusters_.size()) {
    return false;
  }
  const Partition a = canonical();
  const Partition b = other.canonical();
  for (std::size_t i = 0; i < a.clusters_.size(); ++i) {
    if (a.clusters_[i].members != b.clusters_[i].members) return false;
  }
  return true;
}

GoldPartition::GoldPartition(Partition p) : partition(std::move(p)) {
  entity_of.assign(partition.value_count(), -1);
  for (const auto& c : partition.clusters()) {
    for (ValueId v : c.members) entity_of[v] = c.id;
  }
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

std::uint64_t pairs(std::uint64_t n) { return n * (n - (n > 0 ? 1 : 0)) / 2; }

}  // namespace

std::uint64_t match_set_size(const Partition& partition) {
  std::uint64_t total = 0;
  for (const auto& c : partition.clusters()) total += pairs(c.members.size());
  return total;
}

PrecisionRecall precision_recall(const Partition& candidate, const GoldPartition& gold) {
  if (candidate.value_count() != gold.partition.value_count()) {
    throw Error(ErrorCode::kValueTableMismatch,
                "candidate covers " + std::to_string(candidate.value_count()) +
                    " values but gold covers " + std::to_string(gold.partition.value_count()));
  }
  PrecisionRecall pr;
  pr.candidate_matches = match_set_size(candidate);
  pr.gold_matches = match_set_size(gold.partition);

  // Contingency cell sizes n_ij between candidate cluster i and gold entity j.
  std::unordered_map<std::uint64_t, std::uint64_t> cells;
  const auto& clusters = candidate.clusters();
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    cells.clear();
    for (ValueId v : clusters[i].members) {
      ++cells[static_cast<std::uint32_t>(gold.entity_of[v])];
    }
    for (const auto& [entity, count] : cells) pr.correct_matches += pairs(count);
  }

  if (pr.candidate_matches == 0) {
    log::debug("precision: candidate specifies no matches, reporting 1.0");
  } else {
    pr.precision = static_cast<double>(pr.correct_matches) / static_cast<double>(pr.candidate_matches);
  }
  if (pr.gold_matches == 0) {
    log::debug("recall: gold specifies no matches, reporting 1.0");
  } else {
    pr.recall = static_cast<double>(pr.correct_matches) / static_cast<double>(pr.gold_matches);
  }
  return pr;
}

// ---------------------------------------------------------------------------
// Evidence

PairAssertion PairAssertion::make(ValueId x, ValueId y, Polarity polarity) {
  if (x == y) {
    throw Error(ErrorCode::kInvalidArgument,
                "pair assertion needs two distinct values, got " + std::to_string(x) + " twice");
  }
  return x < y ? PairAssertion{x, y, polarity} : PairAssertion{y, x, polarity};
}

namespace {

std::string describe(const PairAssertion& a) {
  std::ostringstream os;
  os << "(" << a.a << ", " << a.b << ")";
  return os.str();
}

}  // namespace

bool VerificationSet::record(const PairAssertion& assertion) {
  auto [it, inserted] = index_.try_emplace(assertion.key(), assertion.polarity);
  if (!inserted) {
    if (it->second != assertion.polarity) {
      throw Error(ErrorCode::kConflictingEvidence,
                  "pair " + describe(assertion) + " asserted as both match and non-match");
    }
    return false;
  }
  ordered_.push_back(assertion);
  if (assertion.polarity == Polarity::kMatch) ++matches_;
  return true;
}

std::size_t VerificationSet::record(std::span<const PairAssertion> assertions) {
  std::unordered_map<std::uint64_t, Polarity> batch;
  for (const auto& a : assertions) {
    auto existing = index_.find(a.key());
    if (existing != index_.end() && existing->second != a.polarity) {
      throw Error(ErrorCode::kConflictingEvidence,
                  "pair " + describe(a) + " asserted as both match and non-match");
    }
    auto [it, inserted] = batch.try_emplace(a.key(), a.polarity);
    if (!inserted && it->second != a.polarity) {
      throw Error(ErrorCode::kConflictingEvidence,
                  "pair " + describe(a) + " asserted as both match and non-match");
    }
  }
  std::size_t added = 0;
  for (const auto& a : assertions) added += record(a) ? 1 : 0;
  return added;
}

void VerificationSet::merge(const VerificationSet& other) { record(other.assertions()); }

std::optional<Polarity> VerificationSet::polarity(ValueId x, ValueId y) const {
  if (x == y) return std::nullopt;
  auto it = index_.find(PairAssertion::make(x, y, Polarity::kMatch).key());
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool VerificationSet::contains(const PairAssertion& assertion) const {
  auto p = polarity(assertion.a, assertion.b);
  return p && *p == assertion.polarity;
}

VerificationSet record_assertions(VerificationSet vs, std::span<const PairAssertion> added) {
  vs.record(added);
  return vs;
}

// ---------------------------------------------------------------------------
// TransitivityIndex

TransitivityIndex::TransitivityIndex(std::size_t value_count)
    : parent_(value_count), rank_(value_count, 0), adjacent_(value_count), components_(value_count) {
  std::iota(parent_.begin(), parent_.end(), ValueId{0});
}

TransitivityIndex TransitivityIndex::build(std::size_t value_count, const VerificationSet& vs) {
  TransitivityIndex index(value_count);
  for (const auto& a : vs.assertions()) {
    if (a.b >= value_count) {
      throw Error(ErrorCode::kInvalidArgument, "assertion references value outside the table");
    }
    index.add(a);
  }
  return index;
}

ValueId TransitivityIndex::find(ValueId v) const {
  ValueId root = v;
  while (parent_[root] != root) root = parent_[root];
  while (parent_[v] != root) {
    ValueId next = parent_[v];
    parent_[v] = root;
    v = next;
  }
  return root;
}

void TransitivityIndex::add(const PairAssertion& assertion) {
  if (assertion.polarity == Polarity::kMatch) {
    add_match(assertion.a, assertion.b);
  } else {
    add_non_match(assertion.a, assertion.b);
  }
}

void TransitivityIndex::add_match(ValueId x, ValueId y) {
  ValueId rx = find(x);
  ValueId ry = find(y);
  if (rx == ry) return;
  if (adjacent_[rx].count(ry) != 0) {
    throw Error(ErrorCode::kConflictingEvidence,
                "match " + std::to_string(x) + "=" + std::to_string(y) +
                    " joins components separated by a non-match");
  }
  if (rank_[rx] < rank_[ry] ||
      (rank_[rx] == rank_[ry] && adjacent_[rx].size() < adjacent_[ry].size())) {
    std::swap(rx, ry);
  }
  // ry is absorbed into rx; re-key its non-match edges onto rx.
  parent_[ry] = rx;
  if (rank_[rx] == rank_[ry]) ++rank_[rx];
  for (ValueId other : adjacent_[ry]) {
    auto& back = adjacent_[other];
    back.erase(ry);
    if (back.insert(rx).second) {
      adjacent_[rx].insert(other);
    } else {
      --edge_count_;  // rx and ry both had an edge to `other`
    }
  }
  adjacent_[ry].clear();
  --components_;
}

void TransitivityIndex::add_non_match(ValueId x, ValueId y) {
  ValueId rx = find(x);
  ValueId ry = find(y);
  if (rx == ry) {
    throw Error(ErrorCode::kConflictingEvidence,
                "non-match " + std::to_string(x) + "!=" + std::to_string(y) +
                    " lands inside one match component");
  }
  if (adjacent_[rx].insert(ry).second) {
    adjacent_[ry].insert(rx);
    ++edge_count_;
  }
}

bool TransitivityIndex::same_component(ValueId x, ValueId y) const { return find(x) == find(y); }

bool TransitivityIndex::separated(ValueId x, ValueId y) const {
  ValueId rx = find(x);
  ValueId ry = find(y);
  return rx != ry && adjacent_[rx].count(ry) != 0;
}

bool TransitivityIndex::can_infer(const PairAssertion& query) const {
  if (query.a >= parent_.size() || query.b >= parent_.size()) return false;
  return query.polarity == Polarity::kMatch ? same_component(query.a, query.b)
                                            : separated(query.a, query.b);
}

ValueId TransitivityIndex::component_of(ValueId v) const { return find(v); }

std::vector<Group> TransitivityIndex::components() const {
  std::unordered_map<ValueId, std::size_t> slot;
  std::vector<Group> out;
  for (ValueId v = 0; v < parent_.size(); ++v) {
    auto [it, inserted] = slot.try_emplace(find(v), out.size());
    if (inserted) out.emplace_back();
    out[it->second].push_back(v);
  }
  return out;
}

bool is_gold_sequence(const VerificationSet& vs, const GoldPartition& gold) {
  const std::size_t n = gold.partition.value_count();
  TransitivityIndex index = TransitivityIndex::build(n, vs);
  const auto& clusters = gold.partition.clusters();
  if (index.component_count() != clusters.size()) return false;
  for (const auto& c : clusters) {
    for (ValueId v : c.members) {
      if (!index.same_component(c.members.front(), v)) return false;
    }
  }
  // Components now coincide with gold clusters; every pair of them needs a
  // non-match edge for the gold non-matches to be inferable.
  const std::uint64_t m = clusters.size();
  return index.non_match_edge_count() == m * (m - (m > 0 ? 1 : 0)) / 2;
}

ValueId representative(const ValueTable& values, std::span<const ValueId> members) {
  ValueId best = members.front();
  for (ValueId v : members) {
    const auto len = values[v].size();
    const auto best_len = values[best].size();
    if (len > best_len || (len == best_len && v < best)) best = v;
  }
  return best;
}

}  // namespace valnorm
