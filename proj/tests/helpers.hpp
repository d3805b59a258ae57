#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "valnorm/core.hpp"

namespace testing {

using valnorm::Group;
using valnorm::Partition;
using valnorm::ValueId;
using valnorm::ValueTable;

inline ValueTable table(std::vector<std::string> values) {
  return ValueTable::from_strings(values);
}

inline Partition by_names(const ValueTable& values,
                          const std::vector<std::vector<std::string>>& clusters) {
  std::vector<Group> groups;
  for (const auto& c : clusters) {
    Group g;
    for (const auto& s : c) g.push_back(*values.find(s));
    groups.push_back(g);
  }
  return Partition::from_groups(values.size(), groups);
}

inline std::set<std::pair<ValueId, ValueId>> brute_matches(const Partition& p) {
  std::set<std::pair<ValueId, ValueId>> out;
  for (const auto& c : p.clusters()) {
    for (ValueId x : c.members) {
      for (ValueId y : c.members) {
        if (x < y) out.emplace(x, y);
      }
    }
  }
  return out;
}

/// Every set partition of n elements as label vectors (restricted growth strings).
inline std::vector<std::vector<int>> all_label_vectors(int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> a(n, 0);
  std::function<void(int, int)> rec = [&](int i, int max) {
    if (i == n) {
      out.push_back(a);
      return;
    }
    for (int v = 0; v <= max + 1; ++v) {
      a[i] = v;
      rec(i + 1, std::max(max, v));
    }
  };
  if (n == 0) return {{}};
  a[0] = 0;
  rec(1, 0);
  return out;
}

/// Literal path search over the evidence graph: a match is inferable when an
/// all-match path joins the pair, a non-match when a path with exactly one
/// non-match edge does.
struct PathOracle {
  std::size_t n;
  std::vector<std::vector<std::pair<ValueId, bool>>> adj;  // (neighbor, is_match)

  PathOracle(std::size_t count, const valnorm::VerificationSet& vs) : n(count), adj(count) {
    for (const auto& a : vs.assertions()) {
      const bool m = a.polarity == valnorm::Polarity::kMatch;
      adj[a.a].emplace_back(a.b, m);
      adj[a.b].emplace_back(a.a, m);
    }
  }

  // reach[v][k]: v reachable from s using exactly k non-match edges (k <= 1).
  bool reachable(ValueId s, ValueId t, int non_matches) const {
    std::vector<std::array<bool, 2>> seen(n, {false, false});
    std::deque<std::pair<ValueId, int>> q;
    seen[s][0] = true;
    q.emplace_back(s, 0);
    while (!q.empty()) {
      auto [v, k] = q.front();
      q.pop_front();
      for (auto [w, m] : adj[v]) {
        const int nk = k + (m ? 0 : 1);
        if (nk > 1 || seen[w][nk]) continue;
        seen[w][nk] = true;
        q.emplace_back(w, nk);
      }
    }
    return seen[t][non_matches];
  }

  bool infer(const valnorm::PairAssertion& q) const {
    return reachable(q.a, q.b, q.polarity == valnorm::Polarity::kMatch ? 0 : 1);
  }
};

/// Pair-enumeration definition of a gold sequence.
inline bool brute_gold_sequence(const valnorm::VerificationSet& vs,
                                const valnorm::GoldPartition& gold) {
  const std::size_t n = gold.partition.value_count();
  PathOracle oracle(n, vs);
  for (ValueId a = 0; a < n; ++a) {
    for (ValueId b = a + 1; b < n; ++b) {
      const bool same = gold.entity_of[a] == gold.entity_of[b];
      auto q = same ? valnorm::PairAssertion::match(a, b) : valnorm::PairAssertion::non_match(a, b);
      if (!oracle.infer(q)) return false;
    }
  }
  return true;
}

inline std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int max_label) {
  std::uniform_int_distribution<int> d(0, max_label);
  std::vector<int> labels(n);
  for (auto& l : labels) l = d(rng);
  return labels;
}

}  // namespace testing

namespace testing {

/// Short company-like strings with typo variants, enough structure for HAC to
/// find non-trivial merges.
inline std::vector<std::string> random_strings(std::mt19937_64& rng, std::size_t n) {
  static const char* kBases[] = {"sony",  "ibm corp", "intel", "garmin", "lg electronics",
                                 "apple", "dell inc", "vizio", "gamevice", "general electric",
                                 "samsung", "acer", "asus", "hp inc", "lenovo"};
  std::set<std::string> seen;
  std::vector<std::string> out;
  std::uniform_int_distribution<int> base(0, 14), op(0, 4), letter(0, 25);
  while (out.size() < n) {
    std::string s = kBases[base(rng)];
    const int edits = static_cast<int>(rng() % 3);
    for (int e = 0; e < edits && !s.empty(); ++e) {
      const std::size_t pos = rng() % s.size();
      switch (op(rng)) {
        case 0: s[pos] = static_cast<char>('a' + letter(rng)); break;
        case 1: s.erase(pos, 1); break;
        case 2: s.insert(pos, 1, static_cast<char>('a' + letter(rng))); break;
        case 3: s[pos] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[pos]))); break;
        default: s += " co"; break;
      }
    }
    if (s.empty() || !seen.insert(s).second) continue;
    out.push_back(s);
  }
  return out;
}

}  // namespace testing
