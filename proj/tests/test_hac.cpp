#include <doctest.h>

#include <cctype>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "valnorm/hac.hpp"

using namespace valnorm;
using testing::by_names;
using testing::table;

namespace {

std::set<std::string> oracle_grams(std::string s, int g, bool pad) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (pad) s = std::string(g - 1, '^') + s + std::string(g - 1, '$');
  std::set<std::string> out;
  for (std::size_t i = 0; i + g <= s.size(); ++i) out.insert(s.substr(i, g));
  return out;
}

double oracle_jaccard(const std::string& a, const std::string& b, int g = 3, bool pad = true) {
  auto ga = oracle_grams(a, g, pad), gb = oracle_grams(b, g, pad);
  if (ga.empty() && gb.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& x : ga) inter += gb.count(x);
  return double(inter) / double(ga.size() + gb.size() - inter);
}

// Naive agglomeration that recomputes every cluster-pair linkage from the
// value similarities at each step.
Partition oracle_hac(const ValueTable& values, const SimilarityConfig& cfg, std::size_t cap) {
  const std::size_t n = values.size();
  std::vector<std::vector<double>> sim(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) sim[i][j] = oracle_jaccard(values[i], values[j]);
  }
  std::vector<Group> clusters;
  for (ValueId v = 0; v < n; ++v) clusters.push_back({v});
  auto linkage = [&](const Group& a, const Group& b) {
    double best = cfg.linkage == Linkage::kComplete ? 1.0 : 0.0, sum = 0.0;
    for (ValueId x : a) {
      for (ValueId y : b) {
        const double s = sim[x][y];
        if (cfg.linkage == Linkage::kSingle) best = std::max(best, s);
        if (cfg.linkage == Linkage::kComplete) best = std::min(best, s);
        sum += s;
      }
    }
    return cfg.linkage == Linkage::kAverage ? sum / double(a.size() * b.size()) : best;
  };
  constexpr double kTie = 1e-12;
  while (true) {
    double best = -1.0;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        if (clusters[i].size() + clusters[j].size() > cap) continue;
        const double s = linkage(clusters[i], clusters[j]);
        if (s < cfg.stop_threshold) continue;
        ValueId lo = std::min(clusters[i][0], clusters[j][0]);
        ValueId hi = std::max(clusters[i][0], clusters[j][0]);
        ValueId blo = std::min(clusters[bi][0], clusters[bj][0]);
        ValueId bhi = std::max(clusters[bi][0], clusters[bj][0]);
        const bool better = best < 0.0 || s > best + kTie ||
                            (s > best - kTie && (lo < blo || (lo == blo && hi < bhi)));
        if (better) {
          best = s;
          bi = i;
          bj = j;
        }
      }
    }
    if (best < 0.0) break;
    Group merged = clusters[bi];
    merged.insert(merged.end(), clusters[bj].begin(), clusters[bj].end());
    std::sort(merged.begin(), merged.end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
    clusters[bi] = merged;
  }
  return Partition::from_groups(n, clusters);
}

// Seven electronics brands; two spellings of LG, four Sony-like strings.
ValueTable brands() { return table({"LG", "Lg", "Sony", "Sonny", "Sony Corp", "Sony Inc", "IBM Corp"}); }

}  // namespace

TEST_SUITE("hac") {
  TEST_CASE("3-gram jaccard") {
    CHECK(jaccard("abc", "abc") == 1.0);
    SimilarityConfig unpadded;
    unpadded.pad = false;
    CHECK(jaccard("abcd", "bcde", unpadded) == doctest::Approx(1.0 / 3.0));
    CHECK(jaccard("x", "y", unpadded) == 0.0);
    CHECK(jaccard("ab", "AB", unpadded) == 1.0);
    CHECK(jaccard("Sony", "SONY") == 1.0);
    CHECK(grams("abcd", unpadded) == std::vector<std::string>{"abc", "bcd"});
  }

  TEST_CASE("jaccard agrees with explicit gram enumeration") {
    std::mt19937_64 rng(5);
    auto strs = testing::random_strings(rng, 60);
    strs.push_back("a very long string with many grams inside it");
    for (std::size_t i = 0; i < strs.size(); ++i) {
      for (std::size_t j = 0; j < strs.size(); ++j) {
        CHECK(jaccard(strs[i], strs[j]) == doctest::Approx(oracle_jaccard(strs[i], strs[j])));
      }
    }
  }

  TEST_CASE("configuration validation") {
    SimilarityConfig bad;
    bad.gram_size = 0;
    CHECK_THROWS(bad.validate());
    bad = {};
    bad.stop_threshold = 1.5;
    CHECK_THROWS(bad.validate());
    CHECK(parse_linkage("single") == Linkage::kSingle);
    CHECK_THROWS(parse_linkage("ward"));
  }

  TEST_CASE("cap 1 yields singletons and an empty trace") {
    auto v = brands();
    auto r = run_hac(v, {}, 1);
    CHECK(r.partition.size() == v.size());
    CHECK(r.trace.empty());
  }

  TEST_CASE("cap 2 on the brand strings") {
    auto v = brands();
    auto r = run_hac(v, {}, 2);
    auto expected = by_names(v, {{"LG", "Lg"}, {"Sony", "Sonny"}, {"Sony Corp", "Sony Inc"}, {"IBM Corp"}});
    CHECK(r.partition.same_grouping(expected));
    REQUIRE(r.trace.size() == 3);
    CHECK(r.trace[0].cluster_a == 0);
    CHECK(r.trace[0].cluster_b == 1);
    CHECK(r.trace[1].cluster_a == 2);
    CHECK(r.trace[1].cluster_b == 3);
    CHECK(r.trace[2].cluster_a == 4);
    CHECK(r.trace[2].cluster_b == 5);

    auto stats = cluster_stats(r.partition);
    CHECK(stats.cluster_count == 4);
    CHECK(stats.size_histogram == std::map<std::size_t, std::size_t>{{1, 1}, {2, 3}});
    CHECK(stats.max_size == 2);
  }

  TEST_CASE("uncapped agglomeration of the brand strings with a permissive threshold") {
    auto v = brands();
    SimilarityConfig cfg;
    cfg.stop_threshold = 0.05;
    auto r = run_hac(v, cfg);
    auto expected = by_names(v, {{"LG", "Lg"}, {"Sony", "Sonny", "Sony Corp", "Sony Inc", "IBM Corp"}});
    CHECK(r.partition.same_grouping(expected));

    std::vector<std::size_t> caps{2, v.size()};
    auto joint = run_joint(v, cfg, caps);
    CHECK(joint.at(v.size()).partition.same_grouping(expected));
    auto capped = by_names(v, {{"LG", "Lg"}, {"Sony", "Sonny"}, {"Sony Corp", "Sony Inc"}, {"IBM Corp"}});
    CHECK(joint.at(2).partition.same_grouping(capped));
  }

  TEST_CASE("equal pairwise similarities follow the id tie-break") {
    auto v = table({"ab1", "ab2", "ab3", "ab4"});
    SimilarityConfig cfg;
    cfg.stop_threshold = 0.2;
    CHECK(jaccard("ab1", "ab2") == doctest::Approx(0.25));
    auto r = run_hac(v, cfg);
    CHECK(r.partition.same_grouping(oracle_hac(v, cfg, 4)));
    REQUIRE(r.trace.size() == 3);
    CHECK(r.trace[0].cluster_a == 0);
    CHECK(r.trace[0].cluster_b == 1);
    CHECK(r.trace[1].cluster_a == 0);
    CHECK(r.trace[1].cluster_b == 2);
  }

  TEST_CASE("agglomeration matches the naive oracle for every linkage and cap") {
    std::mt19937_64 rng(21);
    for (auto linkage : {Linkage::kSingle, Linkage::kComplete, Linkage::kAverage}) {
      for (int trial = 0; trial < 12; ++trial) {
        auto v = ValueTable::from_strings(testing::random_strings(rng, 8 + rng() % 14));
        SimilarityConfig cfg;
        cfg.linkage = linkage;
        for (std::size_t cap : {std::size_t{1}, std::size_t{2}, std::size_t{3}, std::size_t{5}, v.size()}) {
          auto got = run_hac(v, cfg, cap).partition;
          CHECK(got.same_grouping(oracle_hac(v, cfg, cap)));
        }
      }
    }
  }

  TEST_CASE("joint execution equals independent runs for every cap") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 6; ++trial) {
      auto v = ValueTable::from_strings(testing::random_strings(rng, 30));
      SimilarityConfig cfg;
      cfg.linkage = static_cast<Linkage>(trial % 3);
      std::vector<std::size_t> caps;
      for (std::size_t c = 1; c <= v.size(); ++c) caps.push_back(c);
      auto joint = run_joint(v, cfg, caps, 4);
      REQUIRE(joint.size() == caps.size());
      for (std::size_t c : caps) {
        auto solo = run_hac(v, cfg, c);
        CHECK(joint.at(c).partition.same_grouping(solo.partition));
        CHECK(joint.at(c).trace == solo.trace);
        CHECK(cluster_stats(solo.partition).max_size <= c);
      }
    }
  }

  TEST_CASE("trace properties") {
    std::mt19937_64 rng(8);
    auto v = ValueTable::from_strings(testing::random_strings(rng, 40));
    SimilarityConfig cfg;
    cfg.linkage = Linkage::kSingle;
    auto a = run_hac(v, cfg);
    auto b = run_hac(v, cfg);
    CHECK(a.trace == b.trace);
    for (std::size_t i = 1; i < a.trace.size(); ++i) {
      CHECK(a.trace[i].similarity <= a.trace[i - 1].similarity);
      CHECK(a.trace[i].max_cluster_size >= a.trace[i - 1].max_cluster_size);
    }
    std::ostringstream out;
    write_trace(out, a.trace);
    const std::string text = out.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(a.trace.size()));
  }

  TEST_CASE("checkpoints take the longest prefix within the cap") {
    std::mt19937_64 rng(4);
    auto v = ValueTable::from_strings(testing::random_strings(rng, 30));
    auto full = run_hac(v, {});
    for (std::size_t cap = 1; cap <= v.size(); ++cap) {
      auto cp = make_checkpoint(full.trace, v.size(), cap);
      std::size_t expect = 0;
      while (expect < full.trace.size() && full.trace[expect].max_cluster_size <= cap) ++expect;
      CHECK(cp.prefix_length == expect);
      std::map<ValueId, std::size_t> sizes;
      for (ValueId c : cp.cluster_of) ++sizes[c];
      for (auto [id, size] : sizes) CHECK(size <= cap);
    }
  }

  TEST_CASE("singleton cap has perfect precision against any gold") {
    std::mt19937_64 rng(12);
    auto v = ValueTable::from_strings(testing::random_strings(rng, 20));
    GoldPartition gold(Partition::from_labels(testing::random_labels(rng, v.size(), 5)));
    CHECK(precision_recall(run_hac(v, {}, 1).partition, gold).precision == 1.0);
  }

  TEST_CASE("cluster stats recount") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = 1 + rng() % 30;
      auto p = Partition::from_labels(testing::random_labels(rng, n, 6));
      auto s = cluster_stats(p);
      std::map<std::size_t, std::size_t> hist;
      std::size_t mx = 0;
      for (const auto& c : p.clusters()) {
        ++hist[c.members.size()];
        mx = std::max(mx, c.members.size());
      }
      CHECK(s.cluster_count == p.size());
      CHECK(s.size_histogram == hist);
      CHECK(s.max_size == mx);
    }
    auto single = cluster_stats(Partition::singletons(5));
    CHECK(single.cluster_count == 5);
    CHECK(single.size_histogram == std::map<std::size_t, std::size_t>{{1, 5}});
  }

  TEST_CASE("empty input") {
    ValueTable empty;
    auto r = run_hac(empty, {});
    CHECK(r.partition.size() == 0);
    std::vector<std::size_t> caps{1};
    CHECK(run_joint(empty, {}, caps).at(1).partition.size() == 0);
  }
}
