#include <doctest.h>

#include <cmath>
#include <random>

#include "cost_oracle.hpp"
#include "helpers.hpp"
#include "valnorm/costmodel.hpp"
#include "valnorm/error.hpp"

using namespace valnorm;

TEST_SUITE("costmodel") {
  TEST_CASE("purity power law") {
    CHECK(purity({1.0, 0.0}, 1) == 1.0);
    CHECK(purity({1.0, 0.0}, 77) == 1.0);
    CHECK(purity({1.0, -0.3}, 10) == doctest::Approx(std::pow(10.0, -0.3)));
    CHECK(purity({1.4, -0.3}, 1) == 1.0);
    CHECK(purity({1e-9, -2.0}, 100) == kMinPurity);
    CHECK_THROWS(purity({1.0, 0.0}, 0.5));
  }

  TEST_CASE("split depth") {
    CHECK(split_depth(1, 0.3) == 0);
    CHECK(split_depth(10, 0.5) == 3);
    CHECK(split_depth(4, 0.9) == 0);
    CHECK(split_depth(8, 0.5) == 3);  // exact power of two: log2 8 = 3
    CHECK(split_depth(5, 1.0) == 0);
    CHECK(split_depth(3, 0.01) == 2);  // capped at size - 1
  }

  TEST_CASE("split cost for singletons and invalid purity") {
    UserParams u;
    GlobalParams g;
    CHECK(cost_split_cluster(1, 0.3, u, g) == 0.0);
    CHECK(cost_split_cluster(1, 1.0, u, g) == 0.0);
    for (double bad : {0.0, -0.1, 1.5, std::nan("")}) {
      try {
        cost_split_cluster(5, bad, u, g);
        FAIL("expected invalid purity");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kInvalidPurity);
      }
    }
  }

  TEST_CASE("split cost matches the operation walk") {
    UserParams u;
    GlobalParams g;
    testing::SplitWalk walk{u, g};
    CHECK(cost_split_cluster(10, 0.6, u, g) == doctest::Approx(walk.split(10, 0.6)));
    CHECK(cost_split_cluster(20, 0.05, u, g) == doctest::Approx(walk.split(20, 0.05)));
    CHECK(cost_split_cluster(10, 0.3, u, g) == doctest::Approx(walk.split(10, 0.3)));
  }

  TEST_CASE("split cost at size 10, purity 0.6, by hand") {
    // β = min(9, ⌊ln 10 / ln 2.5⌋) = 2; sizes 10 and 4.
    UserParams u;
    GlobalParams g;
    const double it1 = (0.2 * 10 * 0.6 + 0.5 + 1) + (0.3 / 700 * 100 + 0.99 * 0.3 * 7 + 1) +
                       (10 * (0.5 + 1.0 + 0.4 * 0.5) + 1);
    const double it2 = (0.2 * 4 * 0.6 + 0.5 + 1) + (0.3 * 4 + 1) + (4 * (0.5 + 1.0 + 0.4 * 0.5) + 1);
    CHECK(split_depth(10, 0.6) == 2);
    CHECK(cost_split_cluster(10, 0.6, u, g) == doctest::Approx(it1 + it2));
  }

  TEST_CASE("regime dispatch at the boundaries") {
    GlobalParams g;
    CHECK(split_regime(0.5, g) == SplitRegime::kMajority);
    CHECK(split_regime(0.4999, g) == SplitRegime::kMinority);
    CHECK(split_regime(0.1, g) == SplitRegime::kMinority);
    CHECK(split_regime(0.0999, g) == SplitRegime::kMixed);

    // Majority marks the non-dominating share, minority the dominating share.
    UserParams u;
    u.select = 3.0;  // makes the marked share visible in the total
    testing::SplitWalk walk{u, g};
    CHECK(cost_split_cluster(50, 0.5, u, g) == doctest::Approx(walk.split(50, 0.5)));
    CHECK(cost_split_cluster(50, 0.1, u, g) == doctest::Approx(walk.split(50, 0.1)));
  }

  TEST_CASE("local merge cost") {
    UserParams u;
    GlobalParams g;
    CHECK(cost_local_merge(0, u, g) == 1.0);
    CHECK(cost_local_merge(100, u, g) == doctest::Approx(46.0));
    g.shrinkage = 1.0;
    CHECK(cost_local_merge(100, u, g) == doctest::Approx(100 * 0.4 + 1.0));
  }

  TEST_CASE("global merge cost") {
    UserParams u;
    GlobalParams g;
    CHECK(cost_global_merge(0, u, g) == doctest::Approx(3 * (1.2 + 1.0)));
    // Rounds with 97, 67 and 37 rows; 10 hits per column each round.
    CHECK(cost_global_merge(100, u, g) == doctest::Approx(68.0 + 56.0 + 44.0));
    g.hit = 1.0 / 3.0;
    CHECK(cost_global_merge(100, u, g) == doctest::Approx(1.2 + 97 * 0.4 + 3 * (100.0 / 3 - 1) + 1.0));
  }

  TEST_CASE("plan cost of singletons and of a mixed partition") {
    UserParams u;
    GlobalParams g;
    const std::size_t n = 40;
    auto single = cost_plan(Partition::singletons(n), {1.0, 0.0}, 1, u, g);
    CHECK(single.split_seconds == 0.0);
    CHECK(single.split_output == doctest::Approx(40));
    CHECK(single.local_merge_output == doctest::Approx(0.98 * 40));
    CHECK(single.estimated_seconds ==
          doctest::Approx(cost_local_merge(40, u, g) + cost_global_merge(0.98 * 40, u, g)));

    // Sizes 10, 5, 1 at purity 0.6.
    std::vector<Group> groups{{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, {10, 11, 12, 13, 14}, {15}};
    auto p = Partition::from_groups(16, groups);
    PurityModel model{0.6, 0.0};
    auto est = cost_plan(p, model, 10, u, g);
    testing::SplitWalk walk{u, g};
    const double split = walk.split(10, 0.6) + walk.split(5, 0.6) + walk.split(1, 0.6);
    const double r = (split_depth(10, 0.6) + 1) + (split_depth(5, 0.6) + 1) + 1;
    CHECK(est.split_seconds == doctest::Approx(split));
    CHECK(est.split_output == doctest::Approx(r));
    CHECK(est.local_merge_output == doctest::Approx(0.98 * r));
    CHECK(est.estimated_seconds ==
          doctest::Approx(split + walk.local_merge(r) + cost_global_merge(0.98 * r, u, g)));
    CHECK(est.per_cluster_seconds.size() == 3);
    CHECK(est.stats.max_size == 10);
  }

  TEST_CASE("plan cost is monotone in every operation cost") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> bump(0.01, 0.5);
    GlobalParams g;
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t n = 5 + rng() % 60;
      auto p = Partition::from_labels(testing::random_labels(rng, n, 1 + rng() % 10));
      PurityModel model{1.0, -std::uniform_real_distribution<double>(0.0, 1.5)(rng)};
      const std::size_t cap = 1 + rng() % n;
      UserParams base;
      const double before = cost_plan(p, model, cap, base, g).estimated_seconds;
      double UserParams::*fields[] = {&UserParams::focus,           &UserParams::select,
                                      &UserParams::match,           &UserParams::memorize,
                                      &UserParams::recall,          &UserParams::is_pure_slope,
                                      &UserParams::is_pure_offset,  &UserParams::find_dom_linear,
                                      &UserParams::find_dom_quadratic, &UserParams::find_dom_offset};
      for (auto f : fields) {
        UserParams more = base;
        more.*f += bump(rng);
        CHECK(cost_plan(p, model, cap, more, g).estimated_seconds >= before - 1e-9);
      }
    }
  }

  TEST_CASE("costs are finite and non-negative over the whole domain") {
    UserParams u;
    GlobalParams g;
    for (double size : {1.0, 2.0, 7.0, 8.0, 1e3, 1e6}) {
      for (double alpha : {kMinPurity, 0.01, 0.0999, 0.1, 0.3, 0.5, 0.9, 1.0}) {
        const double c = cost_split_cluster(size, alpha, u, g);
        CHECK(std::isfinite(c));
        CHECK(c >= 0.0);
      }
      CHECK(std::isfinite(cost_global_merge(size, u, g)));
      CHECK(cost_local_merge(size, u, g) >= 0.0);
    }
  }

  TEST_CASE("multi-user merge, two equal lists and identical users") {
    UserParams u;
    GlobalParams g;
    std::vector<double> lists{30, 30};
    std::vector<UserParams> users{u, u};
    // One round; scans i = 0..⌊30/6⌋ = 5 against the one remaining list.
    double expect = 0.0;
    for (int i = 0; i <= 5; ++i) {
      expect += 3 * 0.4 + (0.3 + 1.0) * 1.0 + std::max(0.0, 30 * (1 - 3 * i * 0.1)) * 0.4;
    }
    CHECK(cost_multi_user_merge(lists, users, g, 1.0) == doctest::Approx(expect));
  }

  TEST_CASE("multi-user merge, three lists") {
    UserParams u;
    GlobalParams g;
    std::vector<double> lists{30, 90, 60};
    std::vector<UserParams> users{u, u, u};
    // Round 1 scans i = 0..10 over the 60- and 30-value lists; round 2 has
    // nothing left once 33 entities are accounted as merged.
    const double round1 = 39.8 + 29.0 + 18.2 + 7.4 + 7 * 3.8;
    CHECK(cost_multi_user_merge(lists, users, g, 1.0) == doctest::Approx(round1));
  }

  TEST_CASE("multi-user merge takes the slowest user per round and drops rows as mu vanishes") {
    GlobalParams g;
    UserParams fast, slow;
    slow.memorize = 0.9;
    slow.recall = 0.9;
    std::vector<double> lists{40, 25, 25};
    std::vector<UserParams> mixed{fast, slow, fast};
    std::vector<UserParams> slow_all{slow, slow, slow};
    CHECK(cost_multi_user_merge(lists, mixed, g, 1.0) ==
          doctest::Approx(cost_multi_user_merge(lists, slow_all, g, 1.0)));

    UserParams no_recall = slow;
    no_recall.recall = 0.0;
    std::vector<UserParams> nr{no_recall, no_recall, no_recall};
    CHECK(cost_multi_user_merge(lists, slow_all, g, 1e-12) ==
          doctest::Approx(cost_multi_user_merge(lists, nr, g, 1.0)));

    std::vector<double> one{10};
    std::vector<UserParams> u1{fast};
    CHECK_THROWS(cost_multi_user_merge(one, u1, g, 1.0));
  }

  TEST_CASE("multi-user pipeline cost") {
    UserParams u;
    GlobalParams g;
    auto est = cost_plan(Partition::singletons(12), {1.0, 0.0}, 1, u, g);
    std::vector<double> one{est.estimated_seconds};
    CHECK(cost_multi_user(one, 0.0) == est.estimated_seconds);
    std::vector<double> two{50.0, 50.0};
    CHECK(cost_multi_user(two, 7.0) == 57.0);
    std::vector<double> three{10.0, 80.0, 30.0};
    CHECK(cost_multi_user(three, 5.5) == 85.5);
  }

  TEST_CASE("parameter validation") {
    UserParams u;
    CHECK_NOTHROW(u.validate());
    u.row_fraction = 0.0;
    CHECK_THROWS(u.validate());
    u = {};
    u.match = -1;
    CHECK_THROWS(u.validate());
    GlobalParams g;
    g.mixed_threshold = 0.6;
    CHECK_THROWS(g.validate());
    PurityModel m{1.0, 0.2};
    CHECK_THROWS(m.validate());
  }
}
