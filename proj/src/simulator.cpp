#include "valnorm/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <thread>

#include "valnorm/error.hpp"

namespace valnorm {

SyntheticUser generate_user(std::uint64_t seed, int stm_capacity) {
  std::mt19937_64 rng(seed);
  auto draw = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  SyntheticUser u;
  u.seed = seed;
  UserParams& p = u.params;
  p.focus = 0.5;
  p.select = 0.5;
  p.match = draw(0.8, 1.2);
  p.recall = draw(0.3, 0.5);
  p.is_pure_slope = draw(0.1, 0.4);
  p.is_pure_offset = draw(0.3, 1.0);
  p.find_dom_linear = draw(0.2, 0.4);
  p.memorize = p.recall;
  p.stm_capacity = stm_capacity;
  p.find_dom_quadratic = p.find_dom_linear / (stm_capacity * 100.0);
  p.find_dom_offset = 0.99 * p.find_dom_linear * stm_capacity;
  p.validate();
  return u;
}

std::uint64_t user_seed(std::uint64_t seed, std::size_t index) {
  // splitmix64 over (seed, index)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Stm::Stm(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error(ErrorCode::kInvalidArgument, "memory capacity must be positive");
}

Stm::Step Stm::memorize(int entity, ValueId value) {
  Step step;
  auto it = std::find_if(slots_.begin(), slots_.end(), [&](const Slot& s) { return s.entity == entity; });
  if (it != slots_.end()) {
    step.matched = it->value;
    slots_.erase(it);
  } else if (slots_.size() == capacity_) {
    step.evicted = slots_.front();
    slots_.pop_front();
  }
  slots_.push_back({entity, value});
  return step;
}

std::optional<ValueId> Stm::recall(int entity) const {
  for (const auto& s : slots_) {
    if (s.entity == entity) return s.value;
  }
  return std::nullopt;
}

SimulatedActor::SimulatedActor(const GoldPartition& gold, const UserParams& user,
                               const GlobalParams& global, std::uint64_t seed)
    : gold_(&gold), user_(user), global_(global), rng_(seed) {}

Action SimulatedActor::act(const Task& task) {
  Action a;
  a.task_id = task.id;
  OpTally& ops = a.ops;
  const auto& vs = task.values;
  const double size = static_cast<double>(vs.size());
  switch (task.kind) {
    case TaskKind::kIsPureQuestion: {
      // Read values until one maps to a different entity than the first.
      std::size_t run = 1;
      while (run < vs.size() && entity(vs[run]) == entity(vs[0])) ++run;
      ops.is_pure(static_cast<double>(run));
      ops.button();
      a.button = run == vs.size() ? Button::kYes : Button::kNo;
      break;
    }
    case TaskKind::kFindDomAndMark: {
      std::map<int, std::size_t> counts;
      for (ValueId v : vs) ++counts[entity(v)];
      std::size_t best = 0;
      for (const auto& [e, c] : counts) best = std::max(best, c);
      std::vector<int> tied;
      for (const auto& [e, c] : counts) {
        if (c == best) tied.push_back(e);
      }
      dominating_ = tied[tied.size() == 1 ? 0 : rng_() % tied.size()];
      last_cluster_ = vs;
      ops.find_dom(size, user_.stm_capacity);
      ops.button();
      const double alpha = static_cast<double>(best) / size;
      a.button = alpha < global_.mixed_threshold ? Button::kCleanMixed : Button::kMarkValues;
      break;
    }
    case TaskKind::kMarkValues: {
      if (vs != last_cluster_) {
        throw Error(ErrorCode::kActionMismatch, "markValues without a preceding findDom");
      }
      std::size_t dom = 0;
      for (ValueId v : vs) dom += entity(v) == dominating_ ? 1 : 0;
      const bool majority = static_cast<double>(dom) / size >= global_.majority_threshold;
      for (ValueId v : vs) {
        if ((entity(v) == dominating_) != majority) a.marked.push_back(v);
      }
      ops.focus += size;
      ops.match += size;
      ops.select += static_cast<double>(a.marked.size());
      ops.button();
      a.button = majority ? Button::kCreateCleanNew : Button::kCreateNewCleanOld;
      break;
    }
    case TaskKind::kLocalMergeScan: {
      Stm stm(static_cast<std::size_t>(user_.stm_capacity));
      for (ValueId v : vs) {
        ops.memorize += 1;
        if (auto t = stm.memorize(entity(v), v).matched) {
          a.links.emplace_back(v, *t);
          ops.focus += 3;
          ops.select += 2;
        }
      }
      ops.button();
      a.button = Button::kDoneLocalMerging;
      break;
    }
    case TaskKind::kGlobalMergeGrid: {
      Stm stm(task.columns.size());
      for (ValueId b : task.columns) {
        ops.memorize += 1;
        if (auto t = stm.memorize(entity(b), b).matched) {
          a.checks.emplace_back(*t, b);
          ops.button();
        }
      }
      for (ValueId d : vs) {
        ops.recall += 1;
        if (auto t = stm.recall(entity(d))) {
          a.checks.emplace_back(*t, d);
          ops.button();
        }
      }
      ops.button();
      a.button = Button::kGlobalMerge;
      break;
    }
  }
  return a;
}

std::size_t drive_session(CleaningSession& session, SimulatedActor& actor) {
  std::size_t n = 0;
  while (const Task* t = session.current_task()) {
    session.apply(actor.act(*t));
    ++n;
  }
  return n;
}

SimulationReport simulate_session(std::shared_ptr<const ValueTable> values, const Partition& input,
                                  const GoldPartition& gold, const SyntheticUser& user,
                                  const GlobalParams& global, const SimulationOptions& opts) {
  if (gold.entity_of.size() != values->size()) {
    throw Error(ErrorCode::kGoldCoverage, "gold covers " + std::to_string(gold.entity_of.size()) +
                                              " values, dataset has " +
                                              std::to_string(values->size()));
  }
  SessionOptions so;
  so.params = user.params;
  so.global = global;
  so.columns = opts.columns;
  so.simulation = true;
  so.track_verification = opts.check_gold_sequence;
  CleaningSession session(values, input, so);
  SimulatedActor actor(gold, user.params, global, user.seed);
  drive_session(session, actor);
  auto result = session.result();
  SimulationReport r;
  r.total_seconds = result.total_seconds;
  r.phase_seconds = result.phase_seconds;
  r.event_count = session.events().size();
  auto pr = precision_recall(result.partition, gold);
  r.precision = pr.precision;
  r.recall = pr.recall;
  r.gold_sequence = opts.check_gold_sequence && is_gold_sequence(result.verification, gold);
  r.partition = std::move(result.partition);
  return r;
}

MonteCarloStats monte_carlo(std::shared_ptr<const ValueTable> values, const Partition& input,
                            const GoldPartition& gold, std::size_t users, std::uint64_t seed,
                            const GlobalParams& global, unsigned threads,
                            const SimulationOptions& opts) {
  if (users == 0) throw Error(ErrorCode::kInvalidArgument, "monte carlo needs at least one user");
  MonteCarloStats stats;
  stats.users = users;
  stats.seconds.assign(users, 0.0);
  std::vector<char> correct(users, 0);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < users; i = next++) {
      try {
        auto user = generate_user(user_seed(seed, i));
        auto rep = simulate_session(values, input, gold, user, global, opts);
        stats.seconds[i] = rep.total_seconds;
        correct[i] = rep.precision == 1.0 && rep.recall == 1.0;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  unsigned n = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  n = static_cast<unsigned>(std::min<std::size_t>(n, users));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  double sum = 0.0;
  stats.min_seconds = stats.seconds[0];
  stats.max_seconds = stats.seconds[0];
  for (std::size_t i = 0; i < users; ++i) {
    sum += stats.seconds[i];
    stats.min_seconds = std::min(stats.min_seconds, stats.seconds[i]);
    stats.max_seconds = std::max(stats.max_seconds, stats.seconds[i]);
    stats.all_correct = stats.all_correct && correct[i];
  }
  stats.mean_seconds = sum / static_cast<double>(users);
  return stats;
}

CalibrationObservation calibration_observation(const CalibrationTask& task,
                                               const GoldPartition& gold, const UserParams& u) {
  auto entity = [&](ValueId v) { return gold.entity_of.at(v); };
  const auto& vs = task.values;
  const double size = static_cast<double>(vs.size());
  const double button = u.button();
  // Dominating entity, ties to the smallest gold id.
  std::map<int, std::size_t> counts;
  for (ValueId v : vs) ++counts[entity(v)];
  int dom = -1;
  std::size_t best = 0;
  for (const auto& [e, c] : counts) {
    if (c > best) {
      best = c;
      dom = e;
    }
  }
  CalibrationObservation o;
  switch (task.kind) {
    case CalibrationKind::kMatchPair:
      o.answer = entity(vs.at(0)) == entity(vs.at(1));
      o.seconds = u.match + button;
      break;
    case CalibrationKind::kPurityMark:
      for (ValueId v : vs) {
        if (entity(v) == dom) o.marked.push_back(v);
      }
      o.seconds = size * (u.focus + u.match) + static_cast<double>(o.marked.size()) * u.select + button;
      break;
    case CalibrationKind::kIsPureCluster: {
      std::size_t run = 1;
      while (run < vs.size() && entity(vs[run]) == entity(vs[0])) ++run;
      o.answer = run == vs.size();
      o.seconds = u.is_pure_slope * static_cast<double>(run) + u.is_pure_offset + button;
      break;
    }
    case CalibrationKind::kFindDomSmall:
    case CalibrationKind::kFindDomLarge:
      for (ValueId v : vs) {
        if (entity(v) == dom) {
          o.marked = {v};
          break;
        }
      }
      o.seconds = task.kind == CalibrationKind::kFindDomSmall
                      ? u.find_dom_linear * size + button
                      : u.find_dom_quadratic * size * size + u.find_dom_offset + button;
      break;
  }
  return o;
}

CalibrationResult simulate_calibration(const ValueTable& values, const GoldPartition& gold,
                                       const UserParams& user, const UserParams& base,
                                       const CalibrationOptions& opts, const SimilarityConfig& cfg) {
  return simulate_calibration(SimilarityMatrix(values, cfg), gold, user, base, opts);
}

CalibrationResult simulate_calibration(const SimilarityMatrix& matrix, const GoldPartition& gold,
                                       const UserParams& user, const UserParams& base,
                                       const CalibrationOptions& opts) {
  auto plan = plan_calibration(matrix, opts);
  CalibrationSession session(std::move(plan), base, opts);
  while (const CalibrationTask* t = session.next()) {
    session.submit(t->index, calibration_observation(*t, gold, user));
  }
  return session.result();
}

}  // namespace valnorm
