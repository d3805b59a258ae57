#include <doctest.h>

#include <memory>
#include <random>

#include "helpers.hpp"
#include "valnorm/error.hpp"
#include "valnorm/multiuser_session.hpp"
#include "valnorm/synth.hpp"

using namespace valnorm;

namespace {

struct Fixture {
  SynthDataset data;
  std::shared_ptr<const ValueTable> values;
  GoldPartition gold;
  std::shared_ptr<const SimilarityMatrix> matrix;
  std::shared_ptr<const PlanSpace> space;

  explicit Fixture(std::uint64_t seed, std::size_t n = 150, std::size_t entities = 30)
      : data(make(seed, n, entities)),
        values(std::make_shared<const ValueTable>(data.table())),
        gold(data.gold()),
        matrix(std::make_shared<const SimilarityMatrix>(*values, SimilarityConfig{})) {
    auto caps = default_caps(values->size(), 40);
    space = std::make_shared<const PlanSpace>(*matrix, caps);
  }

  static SynthDataset make(std::uint64_t seed, std::size_t n, std::size_t entities) {
    SynthOptions o;
    o.values = n;
    o.entities = entities;
    o.sibling_rate = 0.6;
    o.seed = seed;
    return synthesize(o);
  }
};

std::vector<SyntheticUser> make_users(std::size_t k, std::uint64_t seed) {
  std::vector<SyntheticUser> users;
  for (std::size_t i = 0; i < k; ++i) users.push_back(generate_user(user_seed(seed, i)));
  return users;
}

MultiUserOptions simulated(const std::vector<SyntheticUser>& users) {
  MultiUserOptions o;
  o.users = users.size();
  for (const auto& u : users) o.params.push_back(u.params);
  return o;
}

}  // namespace

TEST_SUITE("multiuser session") {
  TEST_CASE("driven by simulated users it reproduces the batch pipeline") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      Fixture f(seed);
      for (std::size_t k : {1, 2, 3, 5}) {
        auto users = make_users(k, seed * 10 + k);
        MultiUserSession s(f.values, f.matrix, f.space, simulated(users));
        drive_multi_user(s, f.gold, users);
        auto live = s.report(&f.gold);
        auto batch = run_pipeline(f.values, f.gold, users, *f.matrix, *f.space);
        CHECK(live.cap == batch.cap);
        CHECK(live.partition.same_grouping(batch.partition));
        CHECK(live.calibration_seconds == doctest::Approx(batch.calibration_seconds));
        CHECK(live.split_merge_seconds == doctest::Approx(batch.split_merge_seconds));
        CHECK(live.multi_user_seconds == doctest::Approx(batch.multi_user_seconds));
        CHECK(live.wall_seconds == doctest::Approx(batch.wall_seconds));
        CHECK(live.rounds.size() == batch.rounds.size());
        for (std::size_t i = 0; i < k; ++i) {
          CHECK(live.busy_seconds[i] == doctest::Approx(batch.busy_seconds[i]));
        }
        CHECK(live.precision == 1.0);
        CHECK(live.recall == 1.0);
        CHECK(live.gold_sequence);
      }
    }
  }

  TEST_CASE("fixed plan skips calibration") {
    Fixture f(7);
    auto users = make_users(3, 1);
    auto o = simulated(users);
    o.calibrate = false;
    o.cap = 5;
    MultiUserSession s(f.values, f.matrix, f.space, o);
    CHECK(s.stage() == PipelineStage::kCleaning);
    drive_multi_user(s, f.gold, users);
    PipelineOptions po;
    po.cap = 5;
    auto batch = run_pipeline(f.values, f.gold, users, *f.matrix, *f.space, po);
    auto live = s.report(&f.gold);
    CHECK(live.wall_seconds == doctest::Approx(batch.wall_seconds));
    CHECK(live.calibration_seconds == 0.0);
    CHECK_FALSE(live.calibrated);
  }

  TEST_CASE("finished users wait at the barrier") {
    Fixture f(3, 60, 12);
    auto users = make_users(2, 4);
    MultiUserSession s(f.values, f.matrix, f.space, simulated(users));
    REQUIRE(s.stage() == PipelineStage::kCalibrating);
    while (const CalibrationTask* t = s.calibration_task(0)) {
      s.submit_calibration(0, t->index, calibration_observation(*t, f.gold, users[0].params));
    }
    CHECK(s.status(0) == SlotStatus::kWaiting);
    CHECK(s.status(1) == SlotStatus::kTask);
    CHECK(s.calibration_task(0) == nullptr);
    try {
      s.submit_calibration(0, 0, {});
      FAIL("expected a blocked slot");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSlotBlocked);
    }
    while (const CalibrationTask* t = s.calibration_task(1)) {
      s.submit_calibration(1, t->index, calibration_observation(*t, f.gold, users[1].params));
    }
    CHECK(s.stage() == PipelineStage::kCleaning);
    try {
      s.submit_calibration(1, 0, {});
      FAIL("expected a stale stage");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kStaleTask);
    }
    try {
      s.report();
      FAIL("expected an unfinished session");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSessionNotDone);
    }
    drive_multi_user(s, f.gold, users);
    CHECK(s.status(0) == SlotStatus::kDone);
    try {
      s.submit_merge(0, {});
      FAIL("expected a finished session");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSessionDone);
    }
  }

  TEST_CASE("cleaning actions outside the user's share are rejected") {
    Fixture f(5, 80, 16);
    auto users = make_users(2, 2);
    auto o = simulated(users);
    o.calibrate = false;
    o.cap = 1;
    MultiUserSession s(f.values, f.matrix, f.space, o);
    auto t0 = s.cleaning_task(0);
    auto t1 = s.cleaning_task(1);
    REQUIRE(t0);
    REQUIRE(t1);
    SimulatedActor actor(f.gold, users[0].params, {}, users[0].seed);
    Action a = actor.act(*t0);
    a.marked = {t1->values.front()};
    a.button = Button::kMarkValues;
    CHECK_THROWS_AS(s.submit_cleaning(0, a), Error);
    CHECK(s.cleaning_task(0)->id == t0->id);
  }

  TEST_CASE("live timing charges measured seconds") {
    Fixture f(6, 80, 16);
    auto users = make_users(2, 3);
    auto o = simulated(users);
    o.simulation = false;
    MultiUserSession s(f.values, f.matrix, f.space, o);
    drive_multi_user(s, f.gold, users);
    auto r = s.report(&f.gold);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.wall_seconds > 0.0);
  }

  TEST_CASE("option validation") {
    Fixture f(2, 30, 6);
    MultiUserOptions o;
    o.users = 0;
    CHECK_THROWS_AS(MultiUserSession(f.values, f.matrix, f.space, o), Error);
    o.users = 2;
    o.calibrate = false;
    try {
      MultiUserSession(f.values, f.matrix, f.space, o);
      FAIL("expected missing calibration");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMissingCalibration);
    }
    o.calibrate = true;
    o.params = {UserParams{}};
    CHECK_THROWS_AS(MultiUserSession(f.values, f.matrix, f.space, o), Error);
    o.params.clear();
    o.cap = 100000;
    CHECK_THROWS_AS(MultiUserSession(f.values, f.matrix, f.space, o), Error);
  }
}

TEST_SUITE("multiuser merge run") {
  TEST_CASE("stepwise run equals the batch merge and checks task ids") {
    auto values = testing::table({"apple", "apple inc", "banana", "banana co", "cherry", "cherry ltd"});
    GoldPartition gold(Partition::from_labels(std::vector<int>{0, 0, 1, 1, 2, 2}));
    std::vector<std::vector<Group>> lists{{{0}, {2}}, {{1}, {4}}, {{3}, {5}}};
    std::vector<UserParams> users(3);
    auto batch = multi_user_merge(values, lists, gold, users);

    MultiUserMergeRun run(values, lists);
    const MergeScanTask* t = run.task(0);
    REQUIRE(t != nullptr);
    auto stale = simulate_merge_scan(*t, gold);
    stale.task_id += 1;
    try {
      run.submit(0, stale, 1.0);
      FAIL("expected a stale task");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kStaleTask);
    }
    auto outside = simulate_merge_scan(*t, gold);
    outside.matches.emplace_back(t->columns.front(), ValueId{99});
    CHECK_THROWS_AS(run.submit(0, outside, 1.0), Error);
    while (!run.done()) {
      for (std::size_t i = 0; i < 3; ++i) {
        if (const MergeScanTask* task = run.task(i)) {
          auto a = simulate_merge_scan(*task, gold);
          run.submit(i, a, a.ops.seconds(users[i]));
        }
      }
    }
    CHECK(run.clusters() == batch.clusters);
    CHECK(run.seconds() == doctest::Approx(batch.seconds));
    CHECK(run.verification().assertions().size() == batch.verification.assertions().size());
  }

  TEST_CASE("a row claimed by two users is rejected on submit") {
    auto values = testing::table({"acme", "acme corp", "acme co", "zeta"});
    GoldPartition gold(Partition::from_labels(std::vector<int>{0, 0, 0, 1}));
    // List 0 is the longest, so user 0 scans column 0 and user 1 column 3,
    // both against list 1 first. Both claim its only row.
    std::vector<std::vector<Group>> lists{{{0}, {3}}, {{1}}, {{2}}};
    MultiUserMergeRun run(values, lists);
    const MergeScanTask* t0 = run.task(0);
    const MergeScanTask* t1 = run.task(1);
    REQUIRE(t0);
    REQUIRE(t1);
    CHECK(run.task(2) == nullptr);
    REQUIRE(t0->list == 1);
    REQUIRE(t1->list == 1);
    run.submit(0, MergeScanAction{t0->id, {{0, 1}}, {}, {}}, 1.0);
    try {
      run.submit(1, MergeScanAction{t1->id, {{3, 1}}, {}, {}}, 1.0);
      FAIL("expected a conflict");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConflictingEvidence);
    }
    CHECK(run.task(1)->id == t1->id);
  }
}
