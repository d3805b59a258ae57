#include <doctest.h>

#include <memory>
#include <random>

#include "cost_oracle.hpp"
#include "helpers.hpp"
#include "valnorm/error.hpp"
#include "valnorm/simulator.hpp"

using namespace valnorm;

namespace {

std::shared_ptr<const ValueTable> shared(std::vector<std::string> v) {
  return std::make_shared<const ValueTable>(testing::table(std::move(v)));
}

}  // namespace

TEST_SUITE("simulator") {
  TEST_CASE("synthetic users are deterministic and in range") {
    CHECK(generate_user(42).params == generate_user(42).params);
    CHECK_FALSE(generate_user(42).params == generate_user(43).params);
    for (std::uint64_t s = 0; s < 1000; ++s) {
      const auto p = generate_user(user_seed(9, s)).params;
      CHECK(p.focus == 0.5);
      CHECK(p.select == 0.5);
      CHECK((p.match >= 0.8 && p.match <= 1.2));
      CHECK((p.recall >= 0.3 && p.recall <= 0.5));
      CHECK(p.memorize == p.recall);
      CHECK((p.is_pure_slope >= 0.1 && p.is_pure_slope <= 0.4));
      CHECK((p.is_pure_offset >= 0.3 && p.is_pure_offset <= 1.0));
      CHECK((p.find_dom_linear >= 0.2 && p.find_dom_linear <= 0.4));
      CHECK(p.find_dom_quadratic * 700 == doctest::Approx(p.find_dom_linear));
      CHECK(p.find_dom_offset == doctest::Approx(0.99 * p.find_dom_linear * 7));
    }
  }

  TEST_CASE("memory walk over a sorted list with three slots") {
    // Big Blue, GE, Gamevice, Garmin, Ge, IBM, IBM Corp; entities 0..4.
    Stm stm(3);
    CHECK_FALSE(stm.memorize(0, 0).matched);  // Big Blue
    CHECK_FALSE(stm.memorize(1, 1).matched);  // GE
    CHECK_FALSE(stm.memorize(2, 2).matched);  // Gamevice
    auto garmin = stm.memorize(3, 3);
    REQUIRE(garmin.evicted);
    CHECK(garmin.evicted->value == 0);  // the oldest pair goes
    auto ge = stm.memorize(1, 4);
    REQUIRE(ge.matched);
    CHECK(*ge.matched == 1);  // link Ge -> GE
    CHECK_FALSE(ge.evicted);
    CHECK(stm.slots().back() == Stm::Slot{1, 4});
    auto ibm = stm.memorize(4, 5);
    REQUIRE(ibm.evicted);
    CHECK(ibm.evicted->value == 2);  // Gamevice, not the refreshed GE slot
    auto corp = stm.memorize(4, 6);
    CHECK(corp.matched == std::optional<ValueId>(5));
    CHECK(stm.recall(1) == std::optional<ValueId>(4));
    CHECK_FALSE(stm.recall(0));
    CHECK_THROWS(Stm(0));
  }

  TEST_CASE("brand example simulated end to end") {
    auto values = shared({"Sony", "Sony Corp", "Lg", "Sonny", "SONY Corp", "Dell", "LG", "Apple"});
    auto input = testing::by_names(*values, {{"Sony", "Sony Corp", "Lg"},
                                             {"Sonny", "SONY Corp", "Dell", "LG", "Apple"}});
    GoldPartition gold(testing::by_names(
        *values, {{"Sony", "Sony Corp", "Sonny", "SONY Corp"}, {"Lg", "LG"}, {"Dell"}, {"Apple"}}));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto rep = simulate_session(values, input, gold, generate_user(seed), {});
      CHECK(rep.partition.same_grouping(gold.partition));
      CHECK(rep.precision == 1.0);
      CHECK(rep.recall == 1.0);
      CHECK(rep.gold_sequence);
      CHECK(rep.total_seconds > 0.0);
    }
  }

  TEST_CASE("input equal to gold needs only confirmations") {
    auto values = shared({"a1", "a2", "a3", "b1", "b2", "c"});
    auto gold_p = Partition::from_groups(6, {{0, 1, 2}, {3, 4}, {5}});
    GoldPartition gold(gold_p);
    SessionOptions opts;
    CleaningSession s(values, gold_p, opts);
    SimulatedActor actor(gold, opts.params, opts.global, 1);
    while (const Task* t = s.current_task()) {
      const bool split = t->kind == TaskKind::kIsPureQuestion;
      auto a = actor.act(*t);
      if (split) CHECK(a.button == Button::kYes);
      CHECK(t->kind != TaskKind::kFindDomAndMark);
      CHECK(a.links.empty());
      CHECK(a.checks.empty());
      s.apply(a);
    }
    CHECK(s.result().partition.same_grouping(gold_p));
  }

  TEST_CASE("simulated split of an idealized cluster matches the split cost") {
    // Entities of sizes 4, 2, 1, 1: purity 0.5 at sizes 8, 4 and 2, with
    // dominating values listed first at every level.
    auto values = shared({"a1", "a2", "a3", "a4", "b1", "b2", "c", "d"});
    auto input = Partition::from_groups(8, {{0, 1, 2, 3, 4, 5, 6, 7}});
    GoldPartition gold(Partition::from_groups(8, {{0, 1, 2, 3}, {4, 5}, {6}, {7}}));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto user = generate_user(seed);
      auto rep = simulate_session(values, input, gold, user, {});
      GlobalParams g;
      CHECK(rep.phase_seconds[0] == doctest::Approx(cost_split_cluster(8, 0.5, user.params, g)));
      testing::SplitWalk walk{user.params, g};
      CHECK(rep.phase_seconds[0] == doctest::Approx(walk.split(8, 0.5)));
    }
  }

  TEST_CASE("executable correctness over random sessions") {
    std::mt19937_64 rng(17);
    int mixed = 0;
    for (int trial = 0; trial < 60; ++trial) {
      const std::size_t n = 1 + rng() % 60;
      auto values = std::make_shared<const ValueTable>(
          ValueTable::from_strings(testing::random_strings(rng, n)));
      const int entities = 1 + static_cast<int>(rng() % n);
      GoldPartition gold(Partition::from_labels(testing::random_labels(rng, n, entities)));
      const int clusters = 1 + static_cast<int>(rng() % 4);
      auto input = Partition::from_labels(testing::random_labels(rng, n, clusters));
      SimulationOptions opts;
      opts.columns = 2 + rng() % 3;
      auto user = generate_user(rng());
      auto rep = simulate_session(values, input, gold, user, {}, opts);
      CHECK(rep.precision == 1.0);
      CHECK(rep.recall == 1.0);
      CHECK(rep.gold_sequence);
      CHECK(rep.partition.same_grouping(gold.partition));

      SessionOptions so;
      so.params = user.params;
      so.columns = opts.columns;
      CleaningSession s(values, input, so);
      SimulatedActor actor(gold, user.params, {}, user.seed);
      drive_session(s, actor);
      for (const auto& e : s.events()) mixed += e.action.button == Button::kCleanMixed;
    }
    CHECK(mixed > 0);  // the nested-merge branch is exercised
  }

  TEST_CASE("local merge never links different entities") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t n = 2 + rng() % 40;
      auto values = ValueTable::from_strings(testing::random_strings(rng, n));
      GoldPartition gold(Partition::from_labels(testing::random_labels(rng, n, 1 + rng() % n)));
      Task t;
      t.kind = TaskKind::kLocalMergeScan;
      for (ValueId v = 0; v < n; ++v) t.values.push_back(v);
      sort_alphabetically(values, t.values);
      SimulatedActor actor(gold, generate_user(trial).params, {}, 1);
      for (auto [later, earlier] : actor.act(t).links) {
        CHECK(gold.entity_of[later] == gold.entity_of[earlier]);
      }
    }
  }

  TEST_CASE("monte carlo aggregates") {
    std::mt19937_64 rng(5);
    const std::size_t n = 40;
    auto values = std::make_shared<const ValueTable>(
        ValueTable::from_strings(testing::random_strings(rng, n)));
    GoldPartition gold(Partition::from_labels(testing::random_labels(rng, n, 12)));
    auto input = Partition::from_labels(testing::random_labels(rng, n, 5));
    auto one = monte_carlo(values, input, gold, 1, 77, {});
    auto single = simulate_session(values, input, gold, generate_user(user_seed(77, 0)), {});
    CHECK(one.mean_seconds == single.total_seconds);
    CHECK(one.min_seconds == one.max_seconds);

    auto a = monte_carlo(values, input, gold, 12, 3, {}, 4);
    auto b = monte_carlo(values, input, gold, 12, 3, {}, 1);
    CHECK(a.seconds == b.seconds);
    CHECK(a.mean_seconds == b.mean_seconds);
    CHECK(a.all_correct);
    CHECK(a.min_seconds <= a.mean_seconds);
    CHECK(a.mean_seconds <= a.max_seconds);
    CHECK_THROWS(monte_carlo(values, input, gold, 0, 3, {}));
  }

  TEST_CASE("gold must cover the dataset") {
    auto values = shared({"a", "b"});
    GoldPartition gold(Partition::singletons(3));
    try {
      simulate_session(values, Partition::singletons(2), gold, generate_user(1), {});
      FAIL("expected gold coverage error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kGoldCoverage);
    }
  }

  TEST_CASE("calibration against a synthetic user recovers its parameters") {
    // Well-separated entities of sizes 2..15 keep every sampled cluster pure.
    const char* bases[] = {"northwind", "contoso", "fabrikam", "litware", "tailspin", "wingtip",
                           "adventure", "proseware", "woodgrove", "margie", "alpine", "blueyonder",
                           "coho", "lucerne"};
    std::vector<std::string> raw;
    std::vector<int> labels;
    for (int e = 0; e < 14; ++e) {
      for (int k = 0; k < e + 2; ++k) {
        raw.push_back(std::string(bases[e]) + (k ? " " + std::to_string(k) : ""));
        labels.push_back(e);
      }
    }
    auto values = ValueTable::from_strings(raw);
    GoldPartition gold(Partition::from_labels(labels));
    auto user = generate_user(8).params;
    UserParams base;
    auto r = simulate_calibration(values, gold, user, base);
    auto rel = [](double got, double want) { return std::abs(got - want) / std::abs(want); };
    CHECK(rel(r.params.match, user.match) < 1e-9);
    CHECK(rel(r.params.is_pure_slope, user.is_pure_slope) < 1e-9);
    CHECK(rel(r.params.is_pure_offset, user.is_pure_offset) < 1e-9);
    CHECK(rel(r.params.find_dom_linear, user.find_dom_linear) < 1e-9);
    CHECK(rel(r.params.find_dom_quadratic, user.find_dom_quadratic) < 1e-9);
    CHECK(rel(r.params.find_dom_offset, user.find_dom_offset) < 1e-9);
    CHECK(r.total_seconds > 0.0);
  }
}
