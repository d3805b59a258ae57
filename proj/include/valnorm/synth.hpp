#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "valnorm/core.hpp"

namespace valnorm {

/// Per-variant edit model. Each variant of an entity starts from the
/// canonical string and receives 1..max_edits edits drawn with these weights.
struct TypoModel {
  double substitute = 0.30;
  double remove = 0.20;
  double insert = 0.20;
  double change_case = 0.15;
  double abbreviate = 0.15;  // initial of a word, or drop/add a corporate suffix
  int max_edits = 2;

  void validate() const;
};

struct SynthOptions {
  std::size_t values = 100;
  std::size_t entities = 20;
  std::uint64_t seed = 1;
  TypoModel typos;
  /// Probability that a new entity reuses the first word of an earlier one,
  /// producing look-alike entities that HAC tends to mix.
  double family_rate = 0.35;
  /// Probability that a new entity copies an earlier name and changes only
  /// its corporate suffix ("Kora Tembal Labs" next to "Kora Tembal Group").
  double sibling_rate = 0.0;
  /// Spread of entity sizes: extra values go to entities with weights
  /// exp(N(0, size_spread)).
  double size_spread = 0.8;

  void validate() const;
};

struct SynthDataset {
  std::vector<std::string> values;  // distinct, shuffled
  std::vector<int> entity;          // gold entity per value
  std::vector<std::string> canonical;  // per entity

  ValueTable table() const;
  GoldPartition gold() const;
};

/// Deterministic per options. Throws kInvalidArgument unless
/// 0 < entities <= values (both zero yields an empty dataset).
SynthDataset synthesize(const SynthOptions& opts);

/// One value per line.
void write_values(std::ostream& out, const SynthDataset& data);
/// `value,cluster_id` with a header row.
void write_gold(std::ostream& out, const SynthDataset& data);

}  // namespace valnorm
