#include "valnorm/hac.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <mutex>
#include <ostream>
#include <queue>
#include <thread>

#include "valnorm/error.hpp"

namespace valnorm {

std::string_view linkage_name(Linkage linkage) {
  switch (linkage) {
    case Linkage::kSingle: return "single";
    case Linkage::kComplete: return "complete";
    case Linkage::kAverage: return "average";
  }
  return "average";
}

Linkage parse_linkage(std::string_view name) {
  if (name == "single") return Linkage::kSingle;
  if (name == "complete") return Linkage::kComplete;
  if (name == "average") return Linkage::kAverage;
  throw Error(ErrorCode::kInvalidArgument, "unknown linkage '" + std::string(name) + "'");
}

void SimilarityConfig::validate() const {
  if (gram_size < 1) throw Error(ErrorCode::kInvalidArgument, "gram size must be >= 1");
  if (!(stop_threshold >= 0.0 && stop_threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "stop threshold must lie in [0, 1]");
  }
}

// ---------------------------------------------------------------------------
// Grams

namespace {

constexpr char kPadBegin = '\x02';
constexpr char kPadEnd = '\x03';

std::string prepare(std::string_view s, const SimilarityConfig& cfg) {
  std::string out;
  const std::size_t pad = cfg.pad ? static_cast<std::size_t>(cfg.gram_size - 1) : 0;
  out.reserve(s.size() + 2 * pad);
  out.append(pad, kPadBegin);
  for (char c : s) {
    out.push_back(cfg.case_fold ? static_cast<char>(std::tolower(static_cast<unsigned char>(c))) : c);
  }
  out.append(pad, kPadEnd);
  return out;
}

std::uint64_t encode(std::string_view gram) {
  if (gram.size() <= 7) {
    // Exact packing; the length byte keeps different sizes apart.
    std::uint64_t code = gram.size();
    for (unsigned char c : gram) code = (code << 8) | c;
    return code;
  }
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : gram) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h | (std::uint64_t{1} << 63);
}

}  // namespace

GramSet gram_set(std::string_view s, const SimilarityConfig& cfg) {
  const std::string text = prepare(s, cfg);
  const auto g = static_cast<std::size_t>(cfg.gram_size);
  GramSet out;
  if (text.size() < g) return out;
  out.reserve(text.size() - g + 1);
  for (std::size_t i = 0; i + g <= text.size(); ++i) {
    out.push_back(encode(std::string_view(text).substr(i, g)));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::string> grams(std::string_view s, const SimilarityConfig& cfg) {
  std::string text = prepare(s, cfg);
  for (char& c : text) {
    if (c == kPadBegin) c = '^';
    if (c == kPadEnd) c = '$';
  }
  const auto g = static_cast<std::size_t>(cfg.gram_size);
  std::vector<std::string> out;
  for (std::size_t i = 0; i + g <= text.size(); ++i) out.push_back(text.substr(i, g));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double jaccard(const GramSet& a, const GramSet& b) {
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  const std::size_t uni = a.size() + b.size() - common;
  return uni == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(uni);
}

double jaccard(std::string_view a, std::string_view b, const SimilarityConfig& cfg) {
  const GramSet ga = gram_set(a, cfg);
  const GramSet gb = gram_set(b, cfg);
  if (ga.empty() && gb.empty()) {
    SimilarityConfig unpadded = cfg;
    unpadded.pad = false;
    return prepare(a, unpadded) == prepare(b, unpadded) ? 1.0 : 0.0;
  }
  return jaccard(ga, gb);
}

SimilarityMatrix::SimilarityMatrix(const ValueTable& values, const SimilarityConfig& cfg)
    : n_(values.size()), cfg_(cfg), sim_(values.size() * values.size(), 0.0) {
  cfg_.validate();
  std::vector<GramSet> sets;
  sets.reserve(n_);
  for (const auto& v : values.values()) sets.push_back(gram_set(v, cfg_));
  for (std::size_t i = 0; i < n_; ++i) {
    sim_[i * n_ + i] = 1.0;
    for (std::size_t j = i + 1; j < n_; ++j) {
      double s;
      if (sets[i].empty() && sets[j].empty()) {
        s = jaccard(values[static_cast<ValueId>(i)], values[static_cast<ValueId>(j)], cfg_);
      } else {
        s = jaccard(sets[i], sets[j]);
      }
      sim_[i * n_ + j] = s;
      sim_[j * n_ + i] = s;
    }
  }
}

// ---------------------------------------------------------------------------
// Agglomeration

namespace {

struct Candidate {
  double similarity;
  ValueId lo;
  ValueId hi;
  std::uint32_t lo_version;
  std::uint32_t hi_version;
};

// Max-heap order: higher similarity, then smaller lo, then smaller hi.
struct CandidateOrder {
  bool operator()(const Candidate& x, const Candidate& y) const {
    if (x.similarity != y.similarity) return x.similarity < y.similarity;
    if (x.lo != y.lo) return x.lo > y.lo;
    return x.hi > y.hi;
  }
};

class Agglomerator {
 public:
  Agglomerator(const SimilarityMatrix& matrix, std::size_t cap)
      : n_(matrix.size()),
        cap_(cap),
        threshold_(matrix.config().stop_threshold),
        linkage_(matrix.config().linkage),
        sim_(matrix.data()),
        active_(n_, 1),
        size_(n_, 1),
        version_(n_, 0),
        members_(n_) {
    for (std::size_t i = 0; i < n_; ++i) {
      members_[i] = {static_cast<ValueId>(i)};
      active_list_.push_back(static_cast<ValueId>(i));
    }
  }

  // Replays a merge without touching the candidate queue.
  void replay(ValueId a, ValueId b) { combine(std::min(a, b), std::max(a, b), false); }

  void seed() {
    queue_ = {};
    for (std::size_t x = 0; x < active_list_.size(); ++x) {
      const ValueId i = active_list_[x];
      for (std::size_t y = x + 1; y < active_list_.size(); ++y) {
        const ValueId j = active_list_[y];
        consider(std::min(i, j), std::max(i, j));
      }
    }
  }

  void run(MergeTrace& trace, std::size_t running_max) {
    while (!queue_.empty()) {
      const Candidate c = queue_.top();
      queue_.pop();
      if (!active_[c.lo] || !active_[c.hi] || version_[c.lo] != c.lo_version ||
          version_[c.hi] != c.hi_version) {
        continue;
      }
      combine(c.lo, c.hi, true);
      running_max = std::max(running_max, size_[c.lo]);
      trace.push_back(MergeStep{trace.size() + 1, c.lo, c.hi, c.similarity, running_max});
    }
  }

  Partition partition() const {
    std::vector<Group> groups;
    for (ValueId slot : active_list_) groups.push_back(members_[slot]);
    std::sort(groups.begin(), groups.end(),
              [](const Group& x, const Group& y) { return x.front() < y.front(); });
    return Partition::from_groups(n_, std::move(groups));
  }

  std::size_t max_size() const {
    std::size_t m = n_ == 0 ? 0 : 1;
    for (ValueId slot : active_list_) m = std::max(m, size_[slot]);
    return m;
  }

 private:
  double& at(std::size_t i, std::size_t j) { return sim_[i * n_ + j]; }

  void consider(ValueId lo, ValueId hi) {
    const double s = sim_[lo * n_ + hi];
    if (s >= threshold_ && size_[lo] + size_[hi] <= cap_) {
      queue_.push(Candidate{s, lo, hi, version_[lo], version_[hi]});
    }
  }

  void combine(ValueId lo, ValueId hi, bool push) {
    const double wa = static_cast<double>(size_[lo]);
    const double wb = static_cast<double>(size_[hi]);
    for (ValueId k : active_list_) {
      if (k == lo || k == hi) continue;
      const double sa = at(lo, k);
      const double sb = at(hi, k);
      double s;
      switch (linkage_) {
        case Linkage::kSingle: s = std::max(sa, sb); break;
        case Linkage::kComplete: s = std::min(sa, sb); break;
        case Linkage::kAverage:
        default: s = (wa * sa + wb * sb) / (wa + wb); break;
      }
      at(lo, k) = s;
      at(k, lo) = s;
    }
    size_[lo] += size_[hi];
    active_[hi] = 0;
    ++version_[lo];
    ++version_[hi];
    auto& into = members_[lo];
    into.insert(into.end(), members_[hi].begin(), members_[hi].end());
    std::sort(into.begin(), into.end());
    members_[hi].clear();
    active_list_.erase(std::find(active_list_.begin(), active_list_.end(), hi));
    if (!push) return;
    for (ValueId k : active_list_) {
      if (k != lo) consider(std::min(lo, k), std::max(lo, k));
    }
  }

  std::size_t n_;
  std::size_t cap_;
  double threshold_;
  Linkage linkage_;
  std::vector<double> sim_;
  std::vector<char> active_;
  std::vector<std::size_t> size_;
  std::vector<std::uint32_t> version_;
  std::vector<Group> members_;
  std::vector<ValueId> active_list_;
  std::priority_queue<Candidate, std::vector<Candidate>, CandidateOrder> queue_;
};

std::size_t effective_cap(std::optional<std::size_t> cap, std::size_t n) {
  if (cap && *cap == 0) throw Error(ErrorCode::kInvalidArgument, "cluster size cap must be >= 1");
  return cap ? std::min(*cap, std::max<std::size_t>(n, 1)) : std::max<std::size_t>(n, 1);
}

}  // namespace

HacResult run_hac(const SimilarityMatrix& matrix, std::optional<std::size_t> cap) {
  Agglomerator agg(matrix, effective_cap(cap, matrix.size()));
  agg.seed();
  HacResult result;
  agg.run(result.trace, matrix.size() == 0 ? 0 : 1);
  result.partition = agg.partition();
  return result;
}

HacResult run_hac(const ValueTable& values, const SimilarityConfig& cfg,
                  std::optional<std::size_t> cap) {
  return run_hac(SimilarityMatrix(values, cfg), cap);
}

Checkpoint make_checkpoint(const MergeTrace& uncapped, std::size_t value_count, std::size_t cap) {
  Checkpoint cp;
  cp.cap = cap;
  while (cp.prefix_length < uncapped.size() &&
         uncapped[cp.prefix_length].max_cluster_size <= cap) {
    ++cp.prefix_length;
  }
  // Cluster ids are smallest member ids, so a plain union-find over the
  // prefix reconstructs the frontier.
  cp.cluster_of.resize(value_count);
  for (std::size_t v = 0; v < value_count; ++v) cp.cluster_of[v] = static_cast<ValueId>(v);
  auto root = [&cp](ValueId v) {
    while (cp.cluster_of[v] != v) v = cp.cluster_of[v];
    return v;
  };
  for (std::size_t i = 0; i < cp.prefix_length; ++i) {
    const ValueId a = root(uncapped[i].cluster_a);
    const ValueId b = root(uncapped[i].cluster_b);
    cp.cluster_of[std::max(a, b)] = std::min(a, b);
  }
  for (std::size_t v = 0; v < value_count; ++v) cp.cluster_of[v] = root(static_cast<ValueId>(v));
  return cp;
}

std::map<std::size_t, HacResult> run_joint(const SimilarityMatrix& matrix,
                                           std::span<const std::size_t> caps, unsigned threads) {
  const std::size_t n = matrix.size();
  const HacResult uncapped = run_hac(matrix, std::nullopt);
  const std::size_t final_max = cluster_stats(uncapped.partition).max_size;

  std::vector<std::size_t> todo(caps.begin(), caps.end());
  std::sort(todo.begin(), todo.end());
  todo.erase(std::unique(todo.begin(), todo.end()), todo.end());

  std::map<std::size_t, HacResult> out;
  std::vector<std::size_t> resumable;
  for (std::size_t cap : todo) {
    if (cap == 0) throw Error(ErrorCode::kInvalidArgument, "cluster size cap must be >= 1");
    if (cap == 1 || n <= 1) {
      out[cap] = HacResult{Partition::singletons(n), {}};
    } else if (cap >= final_max) {
      out[cap] = uncapped;  // the whole uncapped trace fits under the cap
    } else {
      resumable.push_back(cap);
      out[cap] = HacResult{};
    }
  }

  auto resume = [&](std::size_t cap) {
    const Checkpoint cp = make_checkpoint(uncapped.trace, n, cap);
    Agglomerator agg(matrix, cap);
    HacResult r;
    r.trace.assign(uncapped.trace.begin(),
                   uncapped.trace.begin() + static_cast<std::ptrdiff_t>(cp.prefix_length));
    for (const auto& step : r.trace) agg.replay(step.cluster_a, step.cluster_b);
    agg.seed();  // candidate set re-derived from the frontier
    agg.run(r.trace, r.trace.empty() ? 1 : r.trace.back().max_cluster_size);
    r.partition = agg.partition();
    return r;
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, resumable.size()));
  if (threads <= 1) {
    for (std::size_t cap : resumable) out[cap] = resume(cap);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::mutex out_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < resumable.size(); i = next++) {
        HacResult r = resume(resumable[i]);
        std::lock_guard<std::mutex> lock(out_mutex);
        out[resumable[i]] = std::move(r);
      }
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

std::map<std::size_t, HacResult> run_joint(const ValueTable& values, const SimilarityConfig& cfg,
                                           std::span<const std::size_t> caps, unsigned threads) {
  return run_joint(SimilarityMatrix(values, cfg), caps, threads);
}

ClusterStats cluster_stats(const Partition& partition) {
  ClusterStats stats;
  stats.cluster_count = partition.size();
  for (const auto& c : partition.clusters()) {
    ++stats.size_histogram[c.members.size()];
    stats.max_size = std::max(stats.max_size, c.members.size());
  }
  return stats;
}

void write_trace(std::ostream& out, const MergeTrace& trace) {
  const auto precision = out.precision(17);
  for (const auto& s : trace) {
    out << s.step << ',' << s.cluster_a << ',' << s.cluster_b << ',' << s.similarity << ','
        << s.max_cluster_size << '\n';
  }
  out.precision(precision);
}

}  // namespace valnorm
