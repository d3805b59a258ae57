#include <doctest.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "valnorm/error.hpp"
#include "valnorm/planner.hpp"
#include "valnorm/synth.hpp"

using namespace valnorm;

TEST_SUITE("planner") {
  TEST_CASE("default candidate caps") {
    CHECK(default_caps(0) == std::vector<std::size_t>{1});
    CHECK(default_caps(4) == std::vector<std::size_t>{1, 2, 3, 4});
    auto caps = default_caps(150);
    CHECK(caps.size() == 101);
    CHECK(caps[99] == 100);
    CHECK(caps.back() == 150);
    CHECK(default_caps(100).size() == 100);
  }

  TEST_CASE("selection equals brute force over independent HAC runs") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
      auto values = ValueTable::from_strings(testing::random_strings(rng, 10 + rng() % 40));
      SimilarityConfig cfg;
      SimilarityMatrix m(values, cfg);
      auto caps = default_caps(values.size());
      PurityModel purity{1.0, -0.2 * static_cast<double>(trial % 3)};
      UserParams u;
      GlobalParams g;
      auto report = search_plans(m, caps, purity, u, g);
      REQUIRE(report.estimates.size() == caps.size());
      CHECK(report.estimates.size() <= values.size());
      double best = 1e300;
      std::size_t best_cap = 0;
      for (std::size_t cap : caps) {
        auto est = cost_plan(run_hac(values, cfg, cap).partition, purity, cap, u, g).estimated_seconds;
        if (est < best) {
          best = est;
          best_cap = cap;
        }
      }
      CHECK(report.selected_cap == best_cap);
      CHECK(report.estimates.front().estimated_seconds == doctest::Approx(best));
      CHECK(std::is_sorted(report.estimates.begin(), report.estimates.end(),
                           [](const PlanEstimate& a, const PlanEstimate& b) {
                             return a.estimated_seconds < b.estimated_seconds;
                           }));
    }
  }

  TEST_CASE("well separated singletons pick the merge plan") {
    // Nothing is similar enough to cluster, so every cap yields singletons and
    // the smallest cap wins on the tie.
    auto values = testing::table({"alpha", "bravo", "charlie", "delta", "echo"});
    SimilarityMatrix m(values, {});
    auto caps = default_caps(values.size());
    auto report = search_plans(m, caps, PurityModel{1.0, -0.5}, {}, {});
    CHECK(report.selected_cap == 1);
  }

  TEST_CASE("pricing is a pure function of the plan space and parameters") {
    SynthOptions o;
    o.values = 120;
    o.entities = 30;
    o.sibling_rate = 0.5;
    auto d = synthesize(o);
    auto values = d.table();
    SimilarityMatrix m(values, {});
    PlanSpace space(m, default_caps(values.size()));
    UserParams u;
    GlobalParams g;
    auto a = space.price(PurityModel{1.0, -0.1}, u, g);
    space.price(PurityModel{0.9, -0.4}, u, g);
    auto b = space.price(PurityModel{1.0, -0.1}, u, g);
    REQUIRE(a.estimates.size() == b.estimates.size());
    for (std::size_t i = 0; i < a.estimates.size(); ++i) {
      CHECK(a.estimates[i].cap == b.estimates[i].cap);
      CHECK(a.estimates[i].estimated_seconds == b.estimates[i].estimated_seconds);
    }
    CHECK(a.selected_cap == b.selected_cap);
    CHECK(space.partition(1).size() == values.size());
  }

  TEST_CASE("invalid caps") {
    auto values = testing::table({"a", "b"});
    SimilarityMatrix m(values, {});
    std::vector<std::size_t> none;
    CHECK_THROWS_AS(PlanSpace(m, none), Error);
    std::vector<std::size_t> zero{0, 1};
    CHECK_THROWS_AS(PlanSpace(m, zero), Error);
    std::vector<std::size_t> one{1};
    PlanSpace space(m, one);
    CHECK_THROWS_AS(space.partition(2), Error);
  }
}
