#include "valnorm/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "valnorm/error.hpp"
#include "valnorm/io.hpp"

namespace valnorm {

namespace {

constexpr const char* kOnsets[] = {"b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n",
                                   "p", "r", "s", "t", "v", "w", "z", "br", "ch", "cl",
                                   "dr", "gr", "pl", "st", "tr", "sh", "th"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ea", "ou", "y"};
constexpr const char* kCodas[] = {"", "", "", "n", "r", "s", "t", "l", "x", "m", "ck", "nd"};
constexpr const char* kSuffixes[] = {"Inc", "Corp", "Co", "Ltd", "Group", "Labs", "Systems"};

template <typename T, std::size_t N>
const T& pick(const T (&arr)[N], std::mt19937_64& rng) {
  return arr[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)];
}

std::string make_word(std::mt19937_64& rng) {
  const int syllables = std::uniform_int_distribution<int>(2, 3)(rng);
  std::string w;
  for (int i = 0; i < syllables; ++i) {
    w += pick(kOnsets, rng);
    w += pick(kVowels, rng);
  }
  w += pick(kCodas, rng);
  w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

bool is_suffix(const std::string& w) {
  return std::find(std::begin(kSuffixes), std::end(kSuffixes), w) != std::end(kSuffixes);
}

char random_letter(std::mt19937_64& rng) {
  return static_cast<char>('a' + std::uniform_int_distribution<int>(0, 25)(rng));
}

// Edits avoid the first character so variants stay alphabetically close to
// their canonical form, as real typos mostly do.
std::string apply_edit(std::string s, int kind, std::mt19937_64& rng) {
  auto position = [&](std::size_t lo) {
    return std::uniform_int_distribution<std::size_t>(lo, s.size() - 1)(rng);
  };
  switch (kind) {
    case 0:
      if (s.size() > 2) {
        std::size_t i = position(1);
        if (s[i] != ' ') s[i] = random_letter(rng);
      }
      break;
    case 1:
      if (s.size() > 3) {
        std::size_t i = position(1);
        if (s[i] != ' ') s.erase(i, 1);
      }
      break;
    case 2:
      if (s.size() > 1) s.insert(position(1), 1, random_letter(rng));
      break;
    case 3: {
      const int mode = std::uniform_int_distribution<int>(0, 2)(rng);
      for (auto& c : s) {
        auto u = static_cast<unsigned char>(c);
        c = static_cast<char>(mode == 0 ? std::toupper(u) : std::tolower(u));
      }
      if (mode == 2 && !s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
      break;
    }
    case 4: {
      auto words = split_words(s);
      if (words.empty()) break;
      if (!is_suffix(words.back()) && std::uniform_int_distribution<int>(0, 1)(rng)) {
        words.push_back(pick(kSuffixes, rng));
      } else if (words.size() > 1 && is_suffix(words.back())) {
        words.pop_back();
      } else if (words.size() > 1) {
        auto i = std::uniform_int_distribution<std::size_t>(1, words.size() - 1)(rng);
        words[i] = words[i].substr(0, 1) + ".";
      } else {
        words.push_back(pick(kSuffixes, rng));
      }
      s = join_words(words);
      break;
    }
  }
  return s;
}

}  // namespace

void TypoModel::validate() const {
  const double w[] = {substitute, remove, insert, change_case, abbreviate};
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw Error(ErrorCode::kInvalidArgument, "typo rates must be finite and non-negative");
    }
    sum += x;
  }
  if (sum <= 0.0) throw Error(ErrorCode::kInvalidArgument, "at least one typo rate must be positive");
  if (max_edits < 1) throw Error(ErrorCode::kInvalidArgument, "max_edits must be at least 1");
}

void SynthOptions::validate() const {
  typos.validate();
  if (entities > values) {
    throw Error(ErrorCode::kInvalidArgument, "entities (" + std::to_string(entities) +
                                                 ") must not exceed values (" +
                                                 std::to_string(values) + ")");
  }
  if (values > 0 && entities == 0) {
    throw Error(ErrorCode::kInvalidArgument, "a non-empty dataset needs at least one entity");
  }
  if (!(family_rate >= 0.0 && family_rate <= 1.0) || !(sibling_rate >= 0.0 && sibling_rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "family_rate and sibling_rate must lie in [0, 1]");
  }
  if (!(size_spread >= 0.0) || !std::isfinite(size_spread)) {
    throw Error(ErrorCode::kInvalidArgument, "size_spread must be finite and non-negative");
  }
}

ValueTable SynthDataset::table() const { return ValueTable::from_strings(values); }

GoldPartition SynthDataset::gold() const { return GoldPartition(Partition::from_labels(entity)); }

SynthDataset synthesize(const SynthOptions& opts) {
  opts.validate();
  std::mt19937_64 rng(opts.seed);
  SynthDataset out;
  std::unordered_set<std::string> used;

  // Canonical names, unique across entities.
  std::vector<std::string> first_words;
  while (out.canonical.size() < opts.entities) {
    std::vector<std::string> words;
    if (!out.canonical.empty() &&
        std::uniform_real_distribution<double>(0, 1)(rng) < opts.sibling_rate) {
      words = split_words(out.canonical[std::uniform_int_distribution<std::size_t>(
          0, out.canonical.size() - 1)(rng)]);
      if (is_suffix(words.back())) words.pop_back();
      words.push_back(pick(kSuffixes, rng));
      std::string name = join_words(words);
      if (!used.insert(name).second) continue;
      first_words.push_back(words[0]);
      out.canonical.push_back(std::move(name));
      continue;
    }
    const bool family = !first_words.empty() &&
                        std::uniform_real_distribution<double>(0, 1)(rng) < opts.family_rate;
    words.push_back(family ? first_words[std::uniform_int_distribution<std::size_t>(
                                 0, first_words.size() - 1)(rng)]
                           : make_word(rng));
    words.push_back(make_word(rng));
    if (std::uniform_int_distribution<int>(0, 2)(rng) == 0) words.push_back(pick(kSuffixes, rng));
    std::string name = join_words(words);
    if (!used.insert(name).second) continue;
    first_words.push_back(words[0]);
    out.canonical.push_back(std::move(name));
  }

  // Entity sizes: one value each plus a weighted share of the rest.
  std::vector<std::size_t> sizes(opts.entities, 1);
  if (opts.entities > 0) {
    std::normal_distribution<double> spread(0.0, opts.size_spread);
    std::vector<double> weights(opts.entities);
    for (auto& w : weights) w = std::exp(spread(rng));
    std::discrete_distribution<std::size_t> choose(weights.begin(), weights.end());
    for (std::size_t i = opts.entities; i < opts.values; ++i) ++sizes[choose(rng)];
  }

  std::vector<double> rates = {opts.typos.substitute, opts.typos.remove, opts.typos.insert,
                               opts.typos.change_case, opts.typos.abbreviate};
  std::discrete_distribution<int> edit_kind(rates.begin(), rates.end());
  for (std::size_t e = 0; e < opts.entities; ++e) {
    out.values.push_back(out.canonical[e]);
    out.entity.push_back(static_cast<int>(e));
    for (std::size_t k = 1; k < sizes[e]; ++k) {
      std::string v;
      for (int attempt = 0;; ++attempt) {
        v = out.canonical[e];
        const int edits =
            std::uniform_int_distribution<int>(1, opts.typos.max_edits + attempt / 10)(rng);
        for (int i = 0; i < edits; ++i) v = apply_edit(v, edit_kind(rng), rng);
        if (attempt >= 100) v += " " + std::to_string(k);
        if (used.insert(v).second) break;
      }
      out.values.push_back(std::move(v));
      out.entity.push_back(static_cast<int>(e));
    }
  }

  std::vector<std::size_t> order(out.values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  SynthDataset shuffled;
  shuffled.canonical = std::move(out.canonical);
  for (std::size_t i : order) {
    shuffled.values.push_back(std::move(out.values[i]));
    shuffled.entity.push_back(out.entity[i]);
  }
  // Relabel entities by first appearance so gold ids are dense and ordered.
  std::vector<int> relabel(opts.entities, -1);
  std::vector<std::string> canonical(opts.entities);
  int next = 0;
  for (auto& e : shuffled.entity) {
    if (relabel[e] < 0) {
      canonical[next] = shuffled.canonical[e];
      relabel[e] = next++;
    }
    e = relabel[e];
  }
  shuffled.canonical = std::move(canonical);
  return shuffled;
}

void write_values(std::ostream& out, const SynthDataset& data) {
  for (const auto& v : data.values) out << v << '\n';
}

void write_gold(std::ostream& out, const SynthDataset& data) {
  out << "value,cluster_id\n";
  for (std::size_t i = 0; i < data.values.size(); ++i) {
    out << io::csv_escape(data.values[i]) << ',' << data.entity[i] << '\n';
  }
}

}  // namespace valnorm
