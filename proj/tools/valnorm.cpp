#include <CLI11.hpp>
#include <httplib.h>

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "valnorm/error.hpp"
#include "valnorm/io.hpp"
#include "valnorm/log.hpp"
#include "valnorm/multiuser.hpp"
#include "valnorm/serialize.hpp"
#include "valnorm/service.hpp"
#include "valnorm/synth.hpp"

using namespace valnorm;

namespace {

bool verbose = false;

std::string minutes(double seconds) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << seconds / 60.0 << " min";
  if (verbose) out << " (" << std::setprecision(1) << seconds << " s)";
  return out.str();
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  return out;
}

// Plain files hold one value per line; .csv files are read by column.
std::shared_ptr<const ValueTable> load_values(const std::string& path, const std::string& column) {
  auto in = open_in(path);
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  const auto raw = csv ? io::read_value_column(in, column) : io::read_value_lines(in);
  std::size_t duplicates = 0;
  auto table = std::make_shared<const ValueTable>(ValueTable::from_strings(raw, &duplicates));
  if (duplicates) log::warn(std::to_string(duplicates) + " duplicate values dropped from " + path);
  return table;
}

GoldPartition load_gold(const std::string& path, const ValueTable& values) {
  auto in = open_in(path);
  return io::read_gold(in, values);
}

// Accepts a calibration export ({"params", "purity"}) or a bare params object.
void load_params(const std::string& path, UserParams& params, PurityModel& purity) {
  auto in = open_in(path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
  if (j.contains("calibration")) j = j.at("calibration");
  if (j.contains("params")) {
    params = params_from_json(j.at("params"));
    if (j.contains("purity")) purity = purity_from_json(j.at("purity"));
  } else {
    params = params_from_json(j);
  }
}

// "1,2,5-10,n" with n the value count.
std::vector<std::size_t> parse_caps(const std::string& text, std::size_t n) {
  std::vector<std::size_t> caps;
  auto number = [&](const std::string& s) -> std::size_t {
    if (s == "n") return std::max<std::size_t>(n, 1);
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad cap '" + s + "' in --caps");
    }
  };
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      caps.push_back(number(part));
    } else {
      const std::size_t lo = number(part.substr(0, dash));
      const std::size_t hi = number(part.substr(dash + 1));
      if (lo > hi) throw Error(ErrorCode::kInvalidArgument, "empty cap range '" + part + "'");
      for (std::size_t c = lo; c <= hi; ++c) caps.push_back(c);
    }
  }
  return caps;
}

std::vector<SyntheticUser> team(std::uint64_t seed, std::size_t run, std::size_t k) {
  std::vector<SyntheticUser> users;
  for (std::size_t j = 0; j < k; ++j) users.push_back(generate_user(user_seed(seed, run * k + j)));
  return users;
}

struct PlanArgs {
  std::string values, column = "value", params, gold, caps, purity;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

int cmd_plan(const PlanArgs& a) {
  auto values = load_values(a.values, a.column);
  std::optional<GoldPartition> gold;
  if (!a.gold.empty()) gold = load_gold(a.gold, *values);
  UserParams params;
  PurityModel purity;
  const SyntheticUser user = generate_user(a.seed);
  SimilarityMatrix matrix(*values, {});
  if (!a.params.empty()) {
    load_params(a.params, params, purity);
  } else if (gold) {
    const auto fit = simulate_calibration(matrix, *gold, user.params, UserParams{});
    params = fit.params;
    purity = fit.purity;
    std::cout << "calibrated simulated user " << a.seed << " in " << minutes(fit.total_seconds) << "\n";
  }
  if (!a.purity.empty()) {
    const auto comma = a.purity.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "--purity takes a,b");
    purity = {std::stod(a.purity.substr(0, comma)), std::stod(a.purity.substr(comma + 1))};
    purity.validate();
  }
  const auto caps = a.caps.empty() ? default_caps(values->size()) : parse_caps(a.caps, values->size());
  PlanSpace space(matrix, caps, a.threads);
  const auto report = space.price(purity, params, {});

  std::map<std::size_t, double> actual;
  if (gold) {
    for (std::size_t cap : space.caps()) {
      actual[cap] = simulate_session(values, space.partition(cap), *gold, user, {}).total_seconds;
    }
  }
  std::cout << std::left << std::setw(8) << "cap" << std::setw(22) << "estimated" << std::setw(22)
            << "split" << std::setw(22) << "local merge" << std::setw(22) << "global merge";
  if (gold) std::cout << "simulated";
  std::cout << "\n";
  for (const auto& e : report.estimates) {
    std::cout << std::left << std::setw(8) << e.cap << std::setw(22) << minutes(e.estimated_seconds)
              << std::setw(22) << minutes(e.split_seconds) << std::setw(22)
              << minutes(e.local_merge_seconds) << std::setw(22) << minutes(e.global_merge_seconds);
    if (gold) std::cout << minutes(actual[e.cap]);
    std::cout << "\n";
  }
  std::cout << "selected cap: " << report.selected_cap << " (estimated "
            << minutes(report.estimates.front().estimated_seconds) << ")\n";
  if (gold) {
    const double picked = actual[report.selected_cap];
    std::size_t rank = 1;
    double best = picked;
    for (const auto& [cap, s] : actual) {
      if (s < picked) ++rank;
      best = std::min(best, s);
    }
    std::cout << "picked plan rank: " << rank << " of " << actual.size() << "\n"
              << "time diff to best plan: " << minutes(picked - best) << "\n";
  }
  return 0;
}

struct SimulateArgs {
  std::string values, column = "value", gold, plan = "auto";
  std::size_t users = 20, k = 1;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

int cmd_simulate(const SimulateArgs& a) {
  auto values = load_values(a.values, a.column);
  const auto gold = load_gold(a.gold, *values);
  if (a.users == 0 || a.k == 0) throw Error(ErrorCode::kInvalidArgument, "--users and --k must be positive");
  SimilarityMatrix matrix(*values, {});
  PipelineOptions po;
  po.threads = a.threads;
  const std::size_t n = std::max<std::size_t>(values->size(), 1);
  if (a.plan == "merge") {
    po.cap = 1;
  } else if (a.plan == "quack") {
    po.cap = n;
  } else if (a.plan != "auto") {
    po.cap = parse_caps(a.plan, values->size()).at(0);
  }
  const auto caps = po.cap ? std::vector<std::size_t>{*po.cap} : default_caps(values->size());
  PlanSpace space(matrix, caps, a.threads);

  std::vector<double> seconds;
  bool correct = true;
  std::map<std::size_t, std::size_t> picked;
  for (std::size_t run = 0; run < a.users; ++run) {
    const auto r = run_pipeline(values, gold, team(a.seed, run, a.k), matrix, space, po);
    seconds.push_back(r.wall_seconds);
    correct = correct && r.precision == 1.0 && r.recall == 1.0 && r.gold_sequence;
    ++picked[r.cap];
    if (verbose) {
      std::cout << "run " << run << ": cap " << r.cap << ", " << minutes(r.wall_seconds)
                << " (calibration " << minutes(r.calibration_seconds) << ", cleaning "
                << minutes(r.split_merge_seconds) << ", multi-user merge "
                << minutes(r.multi_user_seconds) << ")\n";
    }
  }
  double total = 0.0;
  for (double s : seconds) total += s;
  std::cout << "plan: " << a.plan << ", runs: " << a.users << ", users per run: " << a.k << "\n"
            << "mean " << minutes(total / static_cast<double>(seconds.size())) << ", min "
            << minutes(*std::min_element(seconds.begin(), seconds.end())) << ", max "
            << minutes(*std::max_element(seconds.begin(), seconds.end())) << "\n"
            << "caps used:";
  for (const auto& [cap, count] : picked) std::cout << " " << cap << "x" << count;
  std::cout << "\naccuracy: " << (correct ? "precision = recall = 1 in every run" : "FAILED") << "\n";
  return correct ? 0 : 2;
}

int cmd_evaluate(const std::string& partition_path, const std::string& gold_path) {
  std::vector<std::string> raw;
  {
    auto in = open_in(partition_path);
    io::CsvReader reader(in);
    std::vector<std::string> row;
    bool first = true;
    while (reader.next(row)) {
      if (row.empty() || (row.size() == 1 && row[0].empty())) continue;
      if (first && row[0] == "value") {
        first = false;
        continue;
      }
      first = false;
      raw.push_back(row[0]);
    }
  }
  const auto values = ValueTable::from_strings(raw);
  auto pin = open_in(partition_path);
  const Partition partition = io::read_partition(pin, values);
  const GoldPartition gold = load_gold(gold_path, values);
  const auto pr = precision_recall(partition, gold);
  std::cout << std::setprecision(6) << "precision: " << pr.precision << "\n"
            << "recall: " << pr.recall << "\n"
            << "candidate matches: " << pr.candidate_matches << "\n"
            << "gold matches: " << pr.gold_matches << "\n"
            << "correct matches: " << pr.correct_matches << "\n";
  return 0;
}

struct SynthArgs {
  SynthOptions opts;
  std::string values_out, gold_out;
};

int cmd_synth(const SynthArgs& a) {
  const auto data = synthesize(a.opts);
  auto values = open_out(a.values_out);
  write_values(values, data);
  auto gold = open_out(a.gold_out);
  write_gold(gold, data);
  std::cout << "wrote " << data.values.size() << " values for " << data.canonical.size()
            << " entities\n";
  return 0;
}

httplib::Server* running_server = nullptr;

void stop_server(int) {
  if (running_server) running_server->stop();
}

int cmd_serve(const std::string& host, int port, const std::string& data_dir, unsigned threads) {
  ServiceOptions so;
  so.data_dir = data_dir;
  so.threads = threads;
  Service service(so);
  httplib::Server server;
  install_routes(server, service);
  // Some kernels let two SO_REUSEADDR sockets share a port, so probe first.
  httplib::Client probe(host, port);
  probe.set_connection_timeout(0, 200000);
  const bool in_use = static_cast<bool>(probe.Get("/health"));
  if (in_use || !server.bind_to_port(host, port)) {
    throw Error(ErrorCode::kIo, "cannot listen on " + host + ":" + std::to_string(port) +
                                    " (port in use or not permitted)");
  }
  running_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::cout << "listening on http://" << host << ":" << port << " with data in " << data_dir
            << std::endl;
  server.listen_after_bind();
  running_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Value normalization with a human in the loop"};
  app.set_config("--config");
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("-v,--verbose", verbose, "Show seconds next to minutes and debug logging");

  PlanArgs plan;
  auto* p = app.add_subcommand("plan", "Estimate the cost of every candidate plan");
  p->add_option("values", plan.values, "Values file (one per line, or .csv)")->required();
  p->add_option("--column", plan.column, "CSV column holding the values");
  p->add_option("--params", plan.params, "User parameters or calibration export (JSON)");
  p->add_option("--purity", plan.purity, "Purity model as a,b");
  p->add_option("--caps", plan.caps, "Candidate caps, e.g. 1,2,5-10,n");
  p->add_option("--gold", plan.gold, "Gold file; adds simulated costs and the picked plan's rank");
  p->add_option("--seed", plan.seed, "Simulated user seed");
  p->add_option("--threads", plan.threads, "Worker threads (0 = all cores)");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Simulate cleaning sessions with synthetic users");
  s->add_option("values", sim.values, "Values file")->required();
  s->add_option("gold", sim.gold, "Gold file (value,cluster_id)")->required();
  s->add_option("--column", sim.column, "CSV column holding the values");
  s->add_option("--users", sim.users, "Number of simulated runs");
  s->add_option("--k", sim.k, "Users cleaning together in each run");
  s->add_option("--seed", sim.seed, "Base seed");
  s->add_option("--plan", sim.plan, "auto, merge, quack or a cap");
  s->add_option("--threads", sim.threads, "Worker threads (0 = all cores)");

  std::string partition_path, eval_gold;
  auto* e = app.add_subcommand("evaluate", "Precision and recall of a partition against gold");
  e->add_option("partition", partition_path, "Partition file (value,cluster_id)")->required();
  e->add_option("gold", eval_gold, "Gold file (value,cluster_id)")->required();

  SynthArgs syn;
  auto* y = app.add_subcommand("synth", "Generate a synthetic dataset with gold");
  y->add_option("--values", syn.opts.values, "Number of values");
  y->add_option("--entities", syn.opts.entities, "Number of entities");
  y->add_option("--seed", syn.opts.seed, "Seed");
  y->add_option("--substitute", syn.opts.typos.substitute, "Weight of character substitutions");
  y->add_option("--remove", syn.opts.typos.remove, "Weight of character deletions");
  y->add_option("--insert", syn.opts.typos.insert, "Weight of character insertions");
  y->add_option("--change-case", syn.opts.typos.change_case, "Weight of case changes");
  y->add_option("--abbreviate", syn.opts.typos.abbreviate, "Weight of abbreviations");
  y->add_option("--max-edits", syn.opts.typos.max_edits, "Edits per variant at most");
  y->add_option("--family-rate", syn.opts.family_rate, "Share of entities reusing a first word");
  y->add_option("--sibling-rate", syn.opts.sibling_rate, "Share of entities differing only in suffix");
  y->add_option("--size-spread", syn.opts.size_spread, "Spread of entity sizes");
  y->add_option("--out-values", syn.values_out, "Values output file")->required();
  y->add_option("--out-gold", syn.gold_out, "Gold output file")->required();

  std::string host = "127.0.0.1", data_dir = "valnorm-data";
  int port = 8080;
  unsigned serve_threads = 0;
  auto* v = app.add_subcommand("serve", "Run the HTTP session service");
  v->add_option("--host", host, "Address to bind");
  v->add_option("--port", port, "Port");
  v->add_option("--data-dir", data_dir, "Directory for datasets, sessions and calibrations");
  v->add_option("--threads", serve_threads, "Worker threads for plan search (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }
  log::set_level(verbose ? log::Level::kDebug : log::Level::kWarn);
  if (v->parsed()) log::set_level(verbose ? log::Level::kDebug : log::Level::kInfo);
  try {
    if (p->parsed()) return cmd_plan(plan);
    if (s->parsed()) return cmd_simulate(sim);
    if (e->parsed()) return cmd_evaluate(partition_path, eval_gold);
    if (y->parsed()) return cmd_synth(syn);
    if (v->parsed()) return cmd_serve(host, port, data_dir, serve_threads);
  } catch (const Error& err) {
    std::cerr << "error (" << error_code_name(err.code()) << "): " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
