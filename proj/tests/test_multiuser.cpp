#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "helpers.hpp"
#include "valnorm/error.hpp"
#include "valnorm/multiuser.hpp"
#include "valnorm/synth.hpp"

using namespace valnorm;

namespace {

// Matches inside each cluster and non-matches between the clusters of one
// list: what a finished single-user session has verified about its share.
VerificationSet list_evidence(const std::vector<std::vector<Group>>& lists) {
  VerificationSet vs;
  for (const auto& list : lists) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      for (std::size_t j = 1; j < list[i].size(); ++j) {
        vs.record(PairAssertion::match(list[i][0], list[i][j]));
      }
      for (std::size_t j = i + 1; j < list.size(); ++j) {
        vs.record(PairAssertion::non_match(list[i][0], list[j][0]));
      }
    }
  }
  return vs;
}

std::vector<SyntheticUser> make_users(std::size_t k, std::uint64_t seed) {
  std::vector<SyntheticUser> users;
  for (std::size_t i = 0; i < k; ++i) users.push_back(generate_user(user_seed(seed, i)));
  return users;
}

}  // namespace

TEST_SUITE("multiuser") {
  TEST_CASE("parameter averaging") {
    UserParams a, b;
    a.match = 0.8;
    b.match = 1.2;
    a.recall = 0.3;
    b.recall = 0.5;
    std::vector<UserParams> two{a, b};
    auto m = average_params(two);
    CHECK(m.match == doctest::Approx(1.0));
    CHECK(m.recall == doctest::Approx(0.4));
    CHECK(m.focus == a.focus);
    std::vector<UserParams> same{a, a, a};
    CHECK(average_params(same) == a);
    std::vector<UserParams> one{b};
    CHECK(average_params(one) == b);
    CHECK_THROWS_AS(average_params(std::span<const UserParams>{}), Error);

    std::vector<PurityModel> models{{1.0, -0.2}, {0.8, -0.4}};
    auto p = average_purity(models);
    CHECK(p.a == doctest::Approx(0.9));
    CHECK(p.b == doctest::Approx(-0.3));
  }

  TEST_CASE("cluster assignment") {
    auto p = Partition::from_groups(20, {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9},
                                         {10, 11, 12, 13, 14, 15, 16, 17, 18},
                                         {19}});
    auto two = assign_clusters(p, 2);
    CHECK(two[0] == std::vector<std::size_t>{0});
    CHECK(two[1] == std::vector<std::size_t>{1, 2});
    auto one = assign_clusters(p, 1);
    CHECK(one[0] == std::vector<std::size_t>{0, 1, 2});

    auto singles = Partition::singletons(12);
    for (const auto& share : assign_clusters(singles, 4)) CHECK(share.size() == 3);
    CHECK_THROWS_AS(assign_clusters(p, 0), Error);
  }

  TEST_CASE("assignment matches a greedy oracle and keeps clusters whole") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + rng() % 80;
      auto p = Partition::from_labels(testing::random_labels(rng, n, 1 + rng() % 20));
      const std::size_t k = 1 + rng() % 6;
      auto shares = assign_clusters(p, k);
      // Oracle: repeatedly give the largest unassigned cluster to the
      // lightest user, scanning in index order.
      std::vector<std::size_t> left(p.size());
      for (std::size_t i = 0; i < left.size(); ++i) left[i] = i;
      std::vector<std::size_t> load(k, 0);
      std::vector<std::vector<std::size_t>> want(k);
      while (!left.empty()) {
        std::size_t pick = 0;
        for (std::size_t i = 1; i < left.size(); ++i) {
          if (p.clusters()[left[i]].members.size() > p.clusters()[left[pick]].members.size()) pick = i;
        }
        std::size_t user = 0;
        for (std::size_t u = 1; u < k; ++u) {
          if (load[u] < load[user]) user = u;
        }
        want[user].push_back(left[pick]);
        load[user] += p.clusters()[left[pick]].members.size();
        left.erase(left.begin() + static_cast<std::ptrdiff_t>(pick));
      }
      for (auto& w : want) std::sort(w.begin(), w.end());
      CHECK(shares == want);
      std::size_t largest = 0;
      for (const auto& c : p.clusters()) largest = std::max(largest, c.members.size());
      auto [lo, hi] = std::minmax_element(load.begin(), load.end());
      CHECK(*hi - *lo <= largest);
    }
  }

  TEST_CASE("disjoint lists produce no matches") {
    auto values = testing::table({"acme", "acme inc", "bolt", "crane", "delta", "ember"});
    GoldPartition gold(Partition::from_groups(6, {{0, 1}, {2}, {3}, {4}, {5}}));
    std::vector<std::vector<Group>> lists{{{0, 1}, {2}}, {{3}, {4}, {5}}};
    std::vector<UserParams> users(2);
    auto r = multi_user_merge(values, lists, gold, users);
    CHECK(r.rounds.size() == 1);
    CHECK(r.rounds[0].source_list == 1);
    CHECK(r.rounds[0].matches == 0);
    CHECK(r.rounds[0].chunk_sizes == std::vector<std::size_t>{2, 1});
    CHECK(Partition::from_groups(6, r.clusters).same_grouping(gold.partition));
    auto vs = list_evidence(lists);
    vs.merge(r.verification);
    CHECK(is_gold_sequence(vs, gold));
  }

  TEST_CASE("one shared entity merges once, timing by hand") {
    // List 0: Apple, Bolt, Crane. List 1: Apple Inc, Delta.
    auto values = testing::table({"Apple", "Bolt", "Crane", "Apple Inc", "Delta"});
    GoldPartition gold(Partition::from_groups(5, {{0, 3}, {1}, {2}, {4}}));
    std::vector<std::vector<Group>> lists{{{0}, {1}, {2}}, {{3}, {4}}};
    UserParams u0, u1;
    u1.recall = 0.7;
    u1.memorize = 0.6;
    std::vector<UserParams> users{u0, u1};
    auto r = multi_user_merge(values, lists, gold, users);
    REQUIRE(r.rounds.size() == 1);
    CHECK(r.rounds[0].matches == 1);
    CHECK(Partition::from_groups(5, r.clusters).same_grouping(gold.partition));
    // User 0 holds Apple and Bolt: two memorizes, both rows read (only one
    // of two columns matches), one check and the closing button.
    const double user0 = 2 * u0.memorize + 2 * u0.recall + u0.button() + u0.button();
    // User 1 holds Crane: one memorize, both rows read, closing button.
    const double user1 = u1.memorize + 2 * u1.recall + u1.button();
    CHECK(r.rounds[0].user_seconds[0] == doctest::Approx(user0));
    CHECK(r.rounds[0].user_seconds[1] == doctest::Approx(user1));
    CHECK(r.seconds == doctest::Approx(std::max(user0, user1)));
    auto vs = list_evidence(lists);
    vs.merge(r.verification);
    CHECK(is_gold_sequence(vs, gold));
  }

  TEST_CASE("scan stops once every column has matched") {
    // Columns a, b, c all match rows; the unrelated rows are never read.
    auto values = testing::table({"alpha", "bravo", "charlie", "alpha co", "bravo co", "charlie co",
                                  "xylo", "yodel", "zebra"});
    GoldPartition gold(Partition::from_groups(9, {{0, 3}, {1, 4}, {2, 5}, {6}, {7}, {8}}));
    std::vector<std::vector<Group>> lists{{{0}, {1}, {2}, {6}}, {{3}, {4}, {5}, {7}, {8}}};
    std::vector<UserParams> users(1);
    users.push_back({});
    // Two users: list 1 (5 values) is the source; user 0 gets 3 columns.
    auto r = multi_user_merge(values, lists, gold, users);
    CHECK(r.rounds[0].source_list == 1);
    CHECK(r.rounds[0].matches == 3);
    UserParams u;
    // User 0: columns alpha co, bravo co, charlie co against list 0, sorted by
    // similarity so the three matches come first.
    CHECK(r.rounds[0].user_seconds[0] == doctest::Approx(3 * u.memorize + 3 * u.recall + 4 * u.button()));
    CHECK(Partition::from_groups(9, r.clusters).same_grouping(gold.partition));
  }

  TEST_CASE("a value matched into two clusters is a conflict") {
    auto values = testing::table({"acme", "acme inc", "acme corp"});
    GoldPartition gold(Partition::from_groups(3, {{0, 1, 2}}));
    // List 0 wrongly holds two values of one entity, split across users.
    std::vector<std::vector<Group>> lists{{{0}, {1}}, {{2}}};
    std::vector<UserParams> users(2);
    try {
      multi_user_merge(values, lists, gold, users);
      FAIL("expected a conflict");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConflictingEvidence);
    }
  }

  TEST_CASE("random lists of clean clusters merge to gold") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 60; ++trial) {
      const std::size_t n = 2 + rng() % 60;
      auto values = ValueTable::from_strings(testing::random_strings(rng, n));
      auto labels = testing::random_labels(rng, n, 1 + rng() % 15);
      GoldPartition gold(Partition::from_labels(labels));
      const std::size_t k = 2 + rng() % 4;
      // Each value goes to a random user; a user's clusters are its gold
      // entities restricted to its values.
      std::vector<std::map<int, Group>> by_user(k);
      for (ValueId v = 0; v < n; ++v) by_user[rng() % k][labels[v]].push_back(v);
      std::vector<std::vector<Group>> lists(k);
      for (std::size_t i = 0; i < k; ++i) {
        for (auto& [e, g] : by_user[i]) lists[i].push_back(g);
        std::shuffle(lists[i].begin(), lists[i].end(), rng);
      }
      std::vector<UserParams> users;
      for (std::size_t i = 0; i < k; ++i) users.push_back(generate_user(rng()).params);
      MultiUserMergeOptions opts;
      opts.columns = 1 + rng() % 4;
      opts.threads = 1 + static_cast<unsigned>(rng() % 3);
      auto r = multi_user_merge(values, lists, gold, users, opts);
      CHECK(Partition::from_groups(n, r.clusters).same_grouping(gold.partition));
      auto vs = list_evidence(lists);
      vs.merge(r.verification);
      CHECK(is_gold_sequence(vs, gold));
      double total = 0.0;
      for (const auto& round : r.rounds) {
        total += round.seconds;
        CHECK(round.seconds == doctest::Approx(
                                   *std::max_element(round.user_seconds.begin(), round.user_seconds.end())));
      }
      CHECK(r.seconds == doctest::Approx(total));
    }
  }

  TEST_CASE("pipeline with one user is the single-user pipeline") {
    SynthOptions o;
    o.values = 150;
    o.entities = 30;
    o.sibling_rate = 0.6;
    o.seed = 4;
    auto d = synthesize(o);
    auto values = std::make_shared<const ValueTable>(d.table());
    auto gold = d.gold();
    SimilarityMatrix m(*values, {});
    PlanSpace space(m, default_caps(values->size()));
    auto users = make_users(1, 9);
    auto r = run_pipeline(values, gold, users, m, space);

    auto cal = simulate_calibration(m, gold, users[0].params, UserParams{});
    auto plan = space.price(cal.purity, cal.params, {});
    auto single = simulate_session(values, space.partition(plan.selected_cap), gold, users[0], {});
    CHECK(r.cap == plan.selected_cap);
    CHECK(r.calibration_seconds == doctest::Approx(cal.total_seconds));
    CHECK(r.split_merge_seconds == doctest::Approx(single.total_seconds));
    CHECK(r.wall_seconds == doctest::Approx(cal.total_seconds + single.total_seconds));
    CHECK(r.multi_user_seconds == 0.0);
    CHECK(r.partition.same_grouping(single.partition));
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.gold_sequence);
  }

  TEST_CASE("pipeline is correct for every user count") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 12; ++trial) {
      SynthOptions o;
      o.values = 40 + rng() % 120;
      o.entities = 5 + rng() % 30;
      o.sibling_rate = 0.5;
      o.seed = rng();
      auto d = synthesize(o);
      auto values = std::make_shared<const ValueTable>(d.table());
      auto gold = d.gold();
      SimilarityMatrix m(*values, {});
      PlanSpace space(m, default_caps(values->size(), 30));
      for (std::size_t k = 1; k <= 5; ++k) {
        PipelineOptions po;
        if (trial % 2) po.cap = space.caps()[rng() % space.caps().size()];
        auto r = run_pipeline(values, gold, make_users(k, rng()), m, space, po);
        CHECK(r.precision == 1.0);
        CHECK(r.recall == 1.0);
        CHECK(r.gold_sequence);
        CHECK(r.calibrated == !po.cap.has_value());
        CHECK(r.wall_seconds == doctest::Approx(r.calibration_seconds + r.split_merge_seconds +
                                                r.multi_user_seconds));
        // Stage maxima: the wall time never exceeds the busiest path.
        for (double busy : r.busy_seconds) CHECK(busy <= r.wall_seconds + 1e-9);
        CHECK(r.split_merge_seconds ==
              doctest::Approx(cost_multi_user(r.session_seconds, 0.0)));
      }
    }
  }

  TEST_CASE("three identical users beat one on a balanced dataset") {
    SynthOptions o;
    o.values = 400;
    o.entities = 80;
    o.sibling_rate = 0.5;
    o.seed = 2;
    auto d = synthesize(o);
    auto values = std::make_shared<const ValueTable>(d.table());
    auto gold = d.gold();
    SimilarityMatrix m(*values, {});
    PlanSpace space(m, default_caps(values->size()));
    auto user = generate_user(5);
    std::vector<SyntheticUser> one{user}, three{user, user, user};
    auto a = run_pipeline(values, gold, one, m, space);
    auto b = run_pipeline(values, gold, three, m, space);
    CHECK(b.wall_seconds < a.wall_seconds);
    CHECK(b.precision == 1.0);
    CHECK(b.recall == 1.0);
  }

  TEST_CASE("empty dataset costs nothing") {
    auto values = std::make_shared<const ValueTable>();
    GoldPartition gold(Partition::singletons(0));
    SimilarityMatrix m(*values, {});
    PlanSpace space(m, default_caps(0));
    auto r = run_pipeline(values, gold, make_users(3, 1), m, space);
    CHECK(r.wall_seconds == 0.0);
    CHECK(r.partition.size() == 0);
    CHECK_THROWS_AS(run_pipeline(values, gold, {}, m, space), Error);
  }
}
