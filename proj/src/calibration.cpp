#include "valnorm/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "valnorm/error.hpp"
#include "valnorm/log.hpp"

namespace valnorm {

std::string_view calibration_kind_name(CalibrationKind kind) {
  switch (kind) {
    case CalibrationKind::kMatchPair: return "matchPair";
    case CalibrationKind::kPurityMark: return "purityMark";
    case CalibrationKind::kIsPureCluster: return "isPureCluster";
    case CalibrationKind::kFindDomSmall: return "findDomSmall";
    case CalibrationKind::kFindDomLarge: return "findDomLarge";
  }
  return "";
}

CalibrationKind parse_calibration_kind(std::string_view name) {
  for (auto k : {CalibrationKind::kMatchPair, CalibrationKind::kPurityMark,
                 CalibrationKind::kIsPureCluster, CalibrationKind::kFindDomSmall,
                 CalibrationKind::kFindDomLarge}) {
    if (calibration_kind_name(k) == name) return k;
  }
  throw Error(ErrorCode::kParse, "unknown calibration task kind '" + std::string(name) + "'");
}

namespace {

using Rng = std::mt19937_64;

std::vector<const Cluster*> by_size_desc(const Partition& p) {
  std::vector<const Cluster*> out;
  for (const auto& c : p.clusters()) {
    if (c.members.size() > 1) out.push_back(&c);
  }
  std::stable_sort(out.begin(), out.end(), [](const Cluster* a, const Cluster* b) {
    if (a->members.size() != b->members.size()) return a->members.size() > b->members.size();
    return *std::min_element(a->members.begin(), a->members.end()) <
           *std::min_element(b->members.begin(), b->members.end());
  });
  return out;
}

std::vector<ValueId> sorted_members(const Cluster& c) {
  auto m = c.members;
  std::sort(m.begin(), m.end());
  return m;
}

void note(std::vector<std::string>* notes, std::string text) {
  log::info(text);
  if (notes) notes->push_back(std::move(text));
}

// Values of randomly ordered clusters concatenated, truncated to `size`.
std::vector<ValueId> synthesize(const Partition& source, std::size_t size, Rng& rng) {
  std::vector<std::size_t> order(source.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<ValueId> out;
  for (std::size_t i : order) {
    for (ValueId v : source.clusters()[i].members) {
      if (out.size() == size) break;
      out.push_back(v);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Up to `count` clusters with lo <= size <= hi: distinct sizes first, then
// repeated sizes, then synthesized clusters of unused sizes. With
// `distinct_sizes` the synthesized clusters come before repeated sizes.
std::vector<std::pair<std::vector<ValueId>, bool>> pick_clusters(
    const Partition& source, std::size_t count, std::size_t lo, std::size_t hi, bool distinct_sizes,
    Rng& rng, std::string_view what, std::vector<std::string>* notes) {
  std::vector<const Cluster*> pool;
  for (const auto& c : source.clusters()) {
    if (c.members.size() >= lo && c.members.size() <= hi) pool.push_back(&c);
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<std::pair<std::vector<ValueId>, bool>> out;
  std::set<std::size_t> sizes;
  std::vector<const Cluster*> repeats;
  for (const Cluster* c : pool) {
    if (out.size() == count) break;
    if (sizes.insert(c->members.size()).second) {
      out.emplace_back(sorted_members(*c), false);
    } else {
      repeats.push_back(c);
    }
  }
  auto take_repeats = [&] {
    for (const Cluster* c : repeats) {
      if (out.size() == count) break;
      out.emplace_back(sorted_members(*c), false);
    }
  };
  if (!distinct_sizes) take_repeats();
  const std::size_t top = std::min(hi, source.value_count());
  if (out.size() < count && lo <= top) {
    std::vector<std::size_t> unused;
    for (std::size_t s = lo; s <= top; ++s) {
      if (!sizes.count(s)) unused.push_back(s);
    }
    std::shuffle(unused.begin(), unused.end(), rng);
    std::size_t synthesized = 0;
    while (out.size() < count && (!distinct_sizes || synthesized < unused.size() || repeats.empty())) {
      const std::size_t s = synthesized < unused.size()
                                ? unused[synthesized]
                                : lo + static_cast<std::size_t>(rng() % (top - lo + 1));
      out.emplace_back(synthesize(source, s, rng), true);
      ++synthesized;
    }
    if (synthesized > 0) {
      note(notes, std::to_string(synthesized) + " " + std::string(what) +
                      " cluster(s) synthesized from random values");
    }
  }
  take_repeats();
  if (out.size() < count) {
    note(notes, "dataset too small for " + std::string(what) + " clusters; " +
                    std::to_string(count - out.size()) + " task(s) skipped");
  }
  return out;
}

}  // namespace

std::vector<CalibrationTask> sample_purity_clusters(const Partition& clusters, std::size_t cap,
                                                    std::size_t count, std::uint64_t seed,
                                                    std::vector<std::string>* notes) {
  std::vector<CalibrationTask> out;
  auto make = [&](const Cluster& c) {
    CalibrationTask t;
    t.kind = CalibrationKind::kPurityMark;
    t.values = sorted_members(c);
    t.cap = cap;
    out.push_back(std::move(t));
  };
  std::vector<const Cluster*> exact;
  for (const auto& c : clusters.clusters()) {
    if (c.members.size() == cap) exact.push_back(&c);
  }
  if (exact.size() >= count) {
    Rng rng(seed);
    std::shuffle(exact.begin(), exact.end(), rng);
    for (std::size_t i = 0; i < count; ++i) make(*exact[i]);
    return out;
  }
  auto largest = by_size_desc(clusters);
  if (largest.empty()) {
    note(notes, "HAC(" + std::to_string(cap) + ") produced only singletons; purity taken as 1");
    return out;
  }
  for (std::size_t i = 0; i < count; ++i) make(*largest[std::min(i, largest.size() - 1)]);
  if (largest.size() < count) {
    note(notes, "HAC(" + std::to_string(cap) + ") has " + std::to_string(largest.size()) +
                    " non-singleton cluster(s); the largest is shown more than once");
  }
  return out;
}

CalibrationPlan plan_calibration(const SimilarityMatrix& matrix, const CalibrationOptions& opts) {
  if (opts.stm_capacity < 1 || opts.small_cap < 2 || opts.large_cap <= opts.small_cap) {
    throw Error(ErrorCode::kInvalidArgument, "invalid calibration options");
  }
  CalibrationPlan plan;
  const std::size_t n = matrix.size();
  const std::size_t k = opts.tasks_per_kind;
  Rng rng(opts.seed);

  if (n >= 2) {
    for (std::size_t i = 0; i < k; ++i) {
      const ValueId a = static_cast<ValueId>(rng() % n);
      ValueId b = static_cast<ValueId>(rng() % (n - 1));
      if (b >= a) ++b;
      CalibrationTask t;
      t.kind = CalibrationKind::kMatchPair;
      t.values = {std::min(a, b), std::max(a, b)};
      plan.tasks.push_back(std::move(t));
    }
  } else {
    note(&plan.notes, "fewer than two values; match pairs skipped");
  }

  std::vector<std::size_t> caps{opts.small_cap, opts.large_cap};
  auto runs = run_joint(matrix, caps);
  const Partition& small = runs.at(opts.small_cap).partition;
  const Partition& large = runs.at(opts.large_cap).partition;
  for (const Partition* p : {&small, &large}) {
    const std::size_t cap = p == &small ? opts.small_cap : opts.large_cap;
    auto tasks = sample_purity_clusters(*p, cap, k, rng(), &plan.notes);
    plan.tasks.insert(plan.tasks.end(), tasks.begin(), tasks.end());
  }

  const std::size_t stm = static_cast<std::size_t>(opts.stm_capacity);
  struct Spec {
    CalibrationKind kind;
    std::size_t lo, hi;
    bool distinct_sizes;
    std::string_view what;
  };
  const Spec specs[] = {
      {CalibrationKind::kIsPureCluster, 2, opts.large_cap, false, "isPure"},
      {CalibrationKind::kFindDomSmall, std::min<std::size_t>(2, stm), stm, false, "small findDom"},
      {CalibrationKind::kFindDomLarge, stm + 1, std::max(opts.large_cap, stm + 3), true, "large findDom"},
  };
  for (const auto& s : specs) {
    auto picked = pick_clusters(large, k, s.lo, s.hi, s.distinct_sizes, rng, s.what, &plan.notes);
    for (auto& [values, synthesized] : picked) {
      CalibrationTask t;
      t.kind = s.kind;
      t.values = std::move(values);
      t.synthesized = synthesized;
      t.cap = opts.large_cap;
      plan.tasks.push_back(std::move(t));
    }
  }
  for (std::size_t i = 0; i < plan.tasks.size(); ++i) plan.tasks[i].index = i;
  return plan;
}

LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "least squares needs matching, non-empty samples");
  }
  const double m = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / m;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LinearFit fit;
  const double scale = std::max(1.0, std::abs(mx));
  if (sxx <= 1e-12 * scale * scale * m) {
    fit.singular = true;
    fit.intercept = my;
    return fit;
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

PurityModel fit_power_law(std::span<const double> caps, std::span<const double> purities) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < caps.size(); ++i) {
    if (!(caps[i] >= 1.0) || !(purities[i] > 0.0 && purities[i] <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "purity samples need cap >= 1 and purity in (0, 1]");
    }
    lx.push_back(std::log(caps[i]));
    ly.push_back(std::log(purities[i]));
  }
  auto fit = least_squares(lx, ly);
  PurityModel model{std::exp(fit.intercept), fit.slope};
  if (fit.singular || model.b > 0.0) {
    model.b = 0.0;
    model.a = std::exp(std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(ly.size()));
  }
  return model;
}

PurityModel fit_purity(double alpha10, double alpha20, std::size_t small_cap,
                       std::size_t large_cap) {
  if (alpha10 == 1.0 && alpha20 == 1.0) {
    log::debug("purity samples are all 1; using a = 1, b = 0");
    return {1.0, 0.0};
  }
  const double caps[] = {1.0, static_cast<double>(small_cap), static_cast<double>(large_cap)};
  const double purities[] = {1.0, alpha10, alpha20};
  return fit_power_law(caps, purities);
}

double fit_match_cost(std::span<const double> seconds, const UserParams& base) {
  if (seconds.empty()) throw Error(ErrorCode::kInvalidArgument, "no match timings");
  double sum = 0.0;
  for (double t : seconds) sum += t - base.button();
  const double rho = sum / static_cast<double>(seconds.size());
  if (rho < 0.0) {
    log::warn("match timings are faster than a button press; match cost floored at 0");
    return 0.0;
  }
  return rho;
}

IsPureFit fit_is_pure(std::span<const IsPureSample> samples, const PurityModel& model,
                      std::size_t cap, const UserParams& base) {
  if (samples.empty()) throw Error(ErrorCode::kInvalidArgument, "no isPure timings");
  const double guess = purity(model, static_cast<double>(cap));
  std::vector<double> x, y;
  for (const auto& s : samples) {
    x.push_back((s.pure ? 1.0 : guess) * s.size);
    y.push_back(s.seconds - base.button());
  }
  auto fit = least_squares(x, y);
  IsPureFit out{fit.slope, fit.intercept, fit.singular};
  if (out.slope < 0.0) {
    out.slope = 0.0;
    out.offset = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  }
  out.offset = std::max(0.0, out.offset);
  return out;
}

FindDomFit fit_find_dom(std::span<const FindDomSample> small, std::span<const FindDomSample> large,
                        const UserParams& base) {
  FindDomFit out;
  if (!small.empty()) {
    double sum = 0.0;
    for (const auto& s : small) {
      if (s.size > base.stm_capacity) {
        throw Error(ErrorCode::kInvalidArgument, "small findDom sample exceeds memory capacity");
      }
      sum += (s.seconds - base.button()) / s.size;
    }
    out.linear = std::max(0.0, sum / static_cast<double>(small.size()));
  } else {
    out.linear = base.find_dom_linear;
  }
  if (!large.empty()) {
    std::vector<double> x, y;
    for (const auto& s : large) {
      if (s.size <= base.stm_capacity) {
        throw Error(ErrorCode::kInvalidArgument, "large findDom sample fits in memory");
      }
      x.push_back(s.size * s.size);
      y.push_back(s.seconds - base.button());
    }
    auto fit = least_squares(x, y);
    out.singular = fit.singular;
    out.quadratic = fit.slope;
    out.offset = fit.intercept;
    if (out.quadratic < 0.0) {
      out.quadratic = 0.0;
      out.offset = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    }
    out.offset = std::max(0.0, out.offset);
  } else {
    out.quadratic = base.find_dom_quadratic;
    out.offset = base.find_dom_offset;
  }
  return out;
}

CalibrationResult fit_calibration(std::span<const CalibrationTask> tasks,
                                  std::span<const CalibrationObservation> observations,
                                  const UserParams& base, const CalibrationOptions& opts) {
  if (tasks.size() != observations.size()) {
    throw Error(ErrorCode::kIncompleteSession, "calibration has unanswered tasks");
  }
  CalibrationResult r;
  r.params = base;
  std::vector<double> match;
  std::map<std::size_t, std::vector<double>> purities;
  std::vector<IsPureSample> pure;
  std::vector<FindDomSample> small, large;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    const auto& o = observations[i];
    const double size = static_cast<double>(t.values.size());
    r.total_seconds += o.seconds;
    switch (t.kind) {
      case CalibrationKind::kMatchPair: match.push_back(o.seconds); break;
      case CalibrationKind::kPurityMark:
        purities[t.cap].push_back(static_cast<double>(o.marked.size()) / size);
        break;
      case CalibrationKind::kIsPureCluster: pure.push_back({size, o.answer, o.seconds}); break;
      case CalibrationKind::kFindDomSmall: small.push_back({size, o.seconds}); break;
      case CalibrationKind::kFindDomLarge: large.push_back({size, o.seconds}); break;
    }
  }
  auto mean_purity = [&](std::size_t cap) {
    auto it = purities.find(cap);
    if (it == purities.end() || it->second.empty()) return 1.0;
    const double m = std::accumulate(it->second.begin(), it->second.end(), 0.0) /
                     static_cast<double>(it->second.size());
    return std::clamp(m, kMinPurity, 1.0);
  };
  r.alpha_small = mean_purity(opts.small_cap);
  r.alpha_large = mean_purity(opts.large_cap);
  r.purity = fit_purity(r.alpha_small, r.alpha_large, opts.small_cap, opts.large_cap);

  if (!match.empty()) {
    r.params.match = fit_match_cost(match, base);
  } else {
    r.notes.push_back("no match timings; match cost left at its default");
  }
  if (!pure.empty()) {
    auto fit = fit_is_pure(pure, r.purity, opts.large_cap, base);
    r.params.is_pure_slope = fit.slope;
    r.params.is_pure_offset = fit.offset;
    if (fit.singular) r.notes.push_back("isPure samples share one size; slope set to 0");
  } else {
    r.notes.push_back("no isPure timings; isPure cost left at its default");
  }
  auto fd = fit_find_dom(small, large, base);
  r.params.find_dom_linear = fd.linear;
  r.params.find_dom_quadratic = fd.quadratic;
  r.params.find_dom_offset = fd.offset;
  if (fd.singular) r.notes.push_back("large findDom samples share one size; quadratic term set to 0");
  r.params.validate();
  return r;
}

CalibrationSession::CalibrationSession(CalibrationPlan plan, UserParams base,
                                       CalibrationOptions opts)
    : plan_(std::move(plan)), base_(base), opts_(opts) {
  base_.validate();
}

const CalibrationTask* CalibrationSession::next() const {
  return done() ? nullptr : &plan_.tasks[observations_.size()];
}

void CalibrationSession::submit(std::size_t task_index, CalibrationObservation observation) {
  if (done()) throw Error(ErrorCode::kSessionDone, "calibration is complete");
  if (task_index != observations_.size()) {
    throw Error(ErrorCode::kStaleTask, "calibration task " + std::to_string(task_index) +
                                           " is not pending (expected " +
                                           std::to_string(observations_.size()) + ")");
  }
  const auto& task = plan_.tasks[task_index];
  if (!(observation.seconds >= 0.0) || !std::isfinite(observation.seconds)) {
    throw Error(ErrorCode::kActionMismatch, "elapsed seconds must be finite and >= 0");
  }
  std::set<ValueId> shown(task.values.begin(), task.values.end());
  std::set<ValueId> marked;
  for (ValueId v : observation.marked) {
    if (!shown.count(v) || !marked.insert(v).second) {
      throw Error(ErrorCode::kActionMismatch, "marked value " + std::to_string(v) +
                                                  " is not shown or marked twice");
    }
  }
  const bool picks = task.kind == CalibrationKind::kFindDomSmall ||
                     task.kind == CalibrationKind::kFindDomLarge;
  if (picks && marked.size() > 1) {
    throw Error(ErrorCode::kActionMismatch, "findDom tasks take one selected value");
  }
  if ((task.kind == CalibrationKind::kMatchPair || task.kind == CalibrationKind::kIsPureCluster) &&
      !marked.empty()) {
    throw Error(ErrorCode::kActionMismatch, "yes/no tasks take no marked values");
  }
  observation.marked.assign(marked.begin(), marked.end());
  observations_.push_back(std::move(observation));
}

CalibrationResult CalibrationSession::result() const {
  if (!done()) throw Error(ErrorCode::kIncompleteSession, "calibration has unanswered tasks");
  auto r = fit_calibration(plan_.tasks, observations_, base_, opts_);
  r.notes.insert(r.notes.begin(), plan_.notes.begin(), plan_.notes.end());
  return r;
}

}  // namespace valnorm
