// prefaudit: command-line front end over the C API.
//
//   prefaudit score  --dataset d.jsonl --config run.json --out runs/a
//   prefaudit vote   --dataset d.jsonl --matrix runs/a/matrix.jsonl --out runs/a
//   prefaudit clean  --dataset d.jsonl --matrix m.jsonl --strategy sac --out runs/a
//
// Exit codes: 0 ok, 1 data error, 2 usage error.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "prefaudit/prefaudit.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  explicit DataError(pa_status s)
      : std::runtime_error(pa_last_error_message()), status(s), detail(pa_last_error_json()) {}
  pa_status status;
  std::string detail;
};

void check(pa_status status) {
  if (status != PA_OK) throw DataError(status);
}

// Owns a string allocated by the library.
struct LibString {
  char* ptr = nullptr;
  ~LibString() { pa_string_free(ptr); }
  char** out() { return &ptr; }
  std::string str() const { return ptr ? ptr : ""; }
};

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};

using Dataset = Handle<pa_dataset, pa_dataset_free>;
using Matrix = Handle<pa_matrix, pa_matrix_free>;
using Votes = Handle<pa_votes, pa_votes_free>;
using Actions = Handle<pa_actions, pa_actions_free>;

struct Options {
  std::string config_path;
  bool error_json = false;

  std::string dataset;
  std::string matrix;
  std::string strategy;
  std::optional<uint64_t> seed;
  std::string out;
  std::string markers;
  std::string decisions;

  // score
  std::string committee;
  int parallelism = 0;
  // judge
  std::string url;
  std::string mode;
  // clean
  std::string scorer;
  std::optional<double> fraction;
  std::string verdicts;
  std::string strength_matrix;
  bool remove_helpful_low = false;
  std::vector<std::string> judge_groups;
  bool allow_identical = false;
  // sample / kappa
  std::optional<int> per_group;
  std::optional<int> per_split;
  std::string annotations;
  // eval
  std::string judgments;
  std::string pairs;
  std::string rewards;
  // serve
  std::string host;
  std::optional<int> port;
  std::string policy;
  std::string token;
  bool no_strict = false;
};

// Values from --config, overridden by any flag given on the command line.
struct RunConfig {
  json file = json::object();
  const Options* flags = nullptr;
  fs::path base;

  std::string str(const std::string& flag, const char* key, const std::string& fallback = "") const {
    if (!flag.empty()) return flag;
    if (file.contains(key) && file[key].is_string()) return file[key].get<std::string>();
    return fallback;
  }
  // Paths from the config file resolve against the config file's directory.
  std::string path(const std::string& flag, const char* key) const {
    if (!flag.empty()) return flag;
    if (file.contains(key) && file[key].is_string()) {
      fs::path p = file[key].get<std::string>();
      return (p.is_relative() ? base / p : p).string();
    }
    return "";
  }
  json params() const { return file.value("params", json::object()); }
};

RunConfig load_config(const Options& opts) {
  RunConfig cfg;
  cfg.flags = &opts;
  if (opts.config_path.empty()) return cfg;
  std::ifstream in(opts.config_path);
  if (!in) throw UsageError("cannot read config " + opts.config_path);
  cfg.file = json::parse(in, nullptr, false);
  if (cfg.file.is_discarded() || !cfg.file.is_object()) {
    throw UsageError("config " + opts.config_path + " is not a JSON object");
  }
  cfg.base = fs::path(opts.config_path).parent_path();
  return cfg;
}

std::string need_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what);
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
  return path;
}

fs::path out_dir(const RunConfig& cfg) {
  auto dir = cfg.path(cfg.flags->out, "out");
  if (dir.empty()) dir = ".";
  return dir;
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw UsageError("cannot write " + path.string());
}

std::string markers_of(const RunConfig& cfg) {
  auto m = cfg.str(cfg.flags->markers, "markers", "hh");
  if (m != "hh" && m != "hash") throw UsageError("--markers must be hh or hash");
  return m;
}

bool allow_identical(const RunConfig& cfg) {
  return cfg.flags->allow_identical || cfg.file.value("allow_identical", false);
}

void load_dataset(const RunConfig& cfg, Dataset& ds) {
  auto path = need_file(cfg.path(cfg.flags->dataset, "dataset"), "dataset");
  check(pa_dataset_load(path.c_str(), markers_of(cfg).c_str(), allow_identical(cfg) ? 1 : 0,
                        ds.out()));
}

void load_votes(const RunConfig& cfg, const Dataset& ds, Matrix& matrix, Votes& votes) {
  auto path = need_file(cfg.path(cfg.flags->matrix, "matrix"), "matrix");
  check(pa_matrix_load(path.c_str(), matrix.out()));
  check(pa_votes_compute(ds.get(), matrix.get(), votes.out()));
}

// --- subcommands --------------------------------------------------------------

int cmd_score(const RunConfig& cfg) {
  json committee;
  fs::path committee_base = cfg.base;
  if (!cfg.flags->committee.empty()) {
    std::ifstream in(need_file(cfg.flags->committee, "committee"));
    committee = json::parse(in, nullptr, false);
    committee_base = fs::path(cfg.flags->committee).parent_path();
  } else if (cfg.file.contains("committee")) {
    committee = cfg.file["committee"];
  } else {
    throw UsageError("missing committee (--committee or config 'committee')");
  }
  if (committee.is_discarded() || !committee.is_array() || committee.empty()) {
    throw UsageError("committee must be a non-empty JSON array");
  }
  int parallelism = cfg.flags->parallelism > 0 ? cfg.flags->parallelism
                                               : cfg.file.value("parallelism", 4);

  Dataset ds;
  load_dataset(cfg, ds);

  auto dir = out_dir(cfg);
  auto matrix_path = cfg.flags->matrix.empty() ? (dir / "matrix.jsonl").string() : cfg.flags->matrix;
  prepare_dir(fs::path(matrix_path).parent_path().empty() ? fs::path(".")
                                                            : fs::path(matrix_path).parent_path());
  auto cache = (fs::path(matrix_path).string() + ".cache");
  auto partial = (fs::path(matrix_path).string() + ".partial");

  Matrix matrix;
  LibString report;
  auto status = pa_matrix_build(ds.get(), committee.dump().c_str(), committee_base.string().c_str(),
                                cache.c_str(), partial.c_str(), parallelism, matrix.out(),
                                report.out());
  if (!report.str().empty()) std::cerr << "score: " << report.str() << "\n";
  check(status);
  check(pa_matrix_save(matrix.get(), matrix_path.c_str()));
  LibString hash;
  check(pa_matrix_hash(matrix.get(), hash.out()));
  std::cout << matrix_path << "  " << pa_dataset_size(ds.get()) << " x "
            << pa_matrix_committee_size(matrix.get()) << "  sha256=" << hash.str() << "\n";
  return kExitOk;
}

int cmd_judge(const RunConfig& cfg) {
  auto url = cfg.str(cfg.flags->url, "judge_url");
  if (url.empty()) throw UsageError("missing --url");
  auto mode = cfg.str(cfg.flags->mode, "judge_mode", "chosen_first");
  if (mode != "chosen_first" && mode != "both" && mode != "both_orders") {
    throw UsageError("--mode must be chosen_first or both");
  }
  Dataset ds;
  load_dataset(cfg, ds);
  auto dir = out_dir(cfg);
  prepare_dir(dir);
  auto verdicts = cfg.path(cfg.flags->verdicts, "verdicts");
  if (verdicts.empty()) verdicts = (dir / "verdicts.jsonl").string();
  LibString report;
  auto status = pa_judge_run(ds.get(), url.c_str(), mode.c_str(), verdicts.c_str(), report.out());
  if (!report.str().empty()) std::cerr << "judge: " << report.str() << "\n";
  check(status);
  std::cout << verdicts << "\n";
  return kExitOk;
}

int cmd_vote(const RunConfig& cfg) {
  Dataset ds;
  Matrix matrix;
  Votes votes;
  load_dataset(cfg, ds);
  load_votes(cfg, ds, matrix, votes);
  auto dir = out_dir(cfg);
  prepare_dir(dir);
  check(pa_votes_save(votes.get(), (dir / "votes.jsonl").string().c_str()));
  std::cout << (dir / "votes.jsonl").string() << "\n";
  return kExitOk;
}

int cmd_stats(const RunConfig& cfg) {
  Dataset ds;
  Matrix matrix;
  Votes votes;
  load_dataset(cfg, ds);
  load_votes(cfg, ds, matrix, votes);
  LibString body, table;
  check(pa_stats(ds.get(), votes.get(), matrix.get(), body.out(), table.out()));
  if (!cfg.flags->out.empty() || cfg.file.contains("out")) {
    auto dir = out_dir(cfg);
    prepare_dir(dir);
    write_text(dir / "stats.json", body.str() + "\n");
    write_text(dir / "stats.txt", table.str());
  }
  std::cout << table.str();
  std::cerr << "reference (HH, 8 gold RMs): harmless 8.02% / 30.94% / 38.74% / 22.29%; "
               "helpful 6.78% / 14.23% / 36.59% / 42.40%\n";
  return kExitOk;
}

json clean_params(const RunConfig& cfg) {
  json params = cfg.params();
  if (!params.is_object()) throw UsageError("config 'params' must be an object");
  const auto& f = *cfg.flags;
  if (f.remove_helpful_low) params["remove_helpful_low"] = true;
  if (!f.scorer.empty()) params["scorer"] = f.scorer;
  if (f.fraction) params["fraction"] = *f.fraction;
  if (!f.verdicts.empty()) params["verdicts"] = f.verdicts;
  if (!f.strength_matrix.empty()) params["strength_matrix"] = f.strength_matrix;
  if (!f.judge_groups.empty()) params["judge_groups"] = f.judge_groups;
  for (const char* key : {"verdicts", "strength_matrix"}) {
    if (!params.contains(key)) continue;
    if (!params[key].is_string()) throw UsageError(std::string(key) + " must be a path");
    fs::path p = params[key].get<std::string>();
    bool from_flag = (std::string(key) == "verdicts" ? f.verdicts : f.strength_matrix).size() > 0;
    if (!from_flag && p.is_relative()) p = cfg.base / p;
    params[key] = need_file(p.string(), key);
  }
  if (params.contains("fraction")) {
    if (!params["fraction"].is_number()) throw UsageError("fraction must be a number");
    double fr = params["fraction"].get<double>();
    if (!(fr >= 0.0 && fr <= 1.0)) throw UsageError("fraction must lie in [0, 1]");
  }
  return params;
}

int cmd_clean(const RunConfig& cfg) {
  auto strategy = cfg.str(cfg.flags->strategy, "strategy", "sac");
  if (!pa_strategy_known(strategy.c_str())) throw UsageError("unknown strategy '" + strategy + "'");
  auto params = clean_params(cfg);
  auto decisions = cfg.path(cfg.flags->decisions, "decisions");
  if (!decisions.empty()) need_file(decisions, "decisions");

  Dataset ds;
  Matrix matrix;
  Votes votes;
  Actions actions;
  load_dataset(cfg, ds);
  load_votes(cfg, ds, matrix, votes);
  check(pa_clean_plan(ds.get(), votes.get(), matrix.get(), strategy.c_str(), params.dump().c_str(),
                      actions.out()));
  if (!decisions.empty()) check(pa_actions_merge_decisions(actions.get(), decisions.c_str()));

  json config{{"strategy", strategy}, {"params", params}};
  if (cfg.flags->seed) {
    config["seed"] = *cfg.flags->seed;
  } else if (cfg.file.contains("seed")) {
    config["seed"] = cfg.file["seed"];
  }
  if (!decisions.empty()) config["decisions"] = fs::path(decisions).filename().string();

  auto dir = out_dir(cfg);
  prepare_dir(dir);
  LibString report;
  check(pa_clean_materialize(ds.get(), votes.get(), actions.get(), config.dump().c_str(),
                             (dir / "cleaned.jsonl").string().c_str(),
                             (dir / "actions.jsonl").string().c_str(),
                             (dir / "report.json").string().c_str(),
                             (dir / "report.txt").string().c_str(), nullptr));
  std::ifstream text(dir / "report.txt");
  std::cout << text.rdbuf();
  return kExitOk;
}

int cmd_kappa(const RunConfig& cfg) {
  auto annotations = need_file(cfg.path(cfg.flags->annotations, "annotations"), "annotations");
  Dataset ds;
  Matrix matrix;
  Votes votes;
  load_dataset(cfg, ds);
  load_votes(cfg, ds, matrix, votes);
  LibString body, table;
  check(pa_kappa_report(ds.get(), votes.get(), annotations.c_str(), body.out(), table.out()));
  if (!cfg.flags->out.empty() || cfg.file.contains("out")) {
    auto dir = out_dir(cfg);
    prepare_dir(dir);
    write_text(dir / "kappa.json", body.str() + "\n");
  }
  std::cout << table.str();
  return kExitOk;
}

int cmd_sample(const RunConfig& cfg) {
  int per_group = cfg.flags->per_group.value_or(cfg.file.value("per_group", 40));
  int per_split = cfg.flags->per_split.value_or(cfg.file.value("per_split", 20));
  uint64_t seed = cfg.flags->seed.value_or(cfg.file.value("seed", uint64_t{0}));
  if (per_group <= 0 || per_split <= 0) throw UsageError("sample sizes must be positive");
  Dataset ds;
  Matrix matrix;
  Votes votes;
  load_dataset(cfg, ds);
  load_votes(cfg, ds, matrix, votes);
  LibString ids;
  check(pa_sample(ds.get(), votes.get(), per_group, per_split, seed, ids.out()));
  auto dir = out_dir(cfg);
  prepare_dir(dir);
  write_text(dir / "sample.json", ids.str() + "\n");
  std::cout << (dir / "sample.json").string() << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg) {
  auto judgments = cfg.path(cfg.flags->judgments, "judgments");
  auto pairs = cfg.path(cfg.flags->pairs, "pairs");
  auto rewards = cfg.path(cfg.flags->rewards, "rewards");
  if (judgments.empty() && pairs.empty() && rewards.empty()) {
    throw UsageError("eval needs --judgments, --pairs or --rewards");
  }
  for (const auto* p : {&judgments, &pairs, &rewards}) {
    if (!p->empty()) need_file(*p, "evaluation input");
  }
  auto opt = [](const std::string& s) { return s.empty() ? nullptr : s.c_str(); };
  LibString body, table;
  check(pa_eval(opt(judgments), opt(pairs), opt(rewards), body.out(), table.out()));
  if (!cfg.flags->out.empty() || cfg.file.contains("out")) {
    auto dir = out_dir(cfg);
    prepare_dir(dir);
    write_text(dir / "eval.json", body.str() + "\n");
  }
  std::cout << table.str();
  return kExitOk;
}

int cmd_serve(const RunConfig& cfg) {
  auto log = cfg.path(cfg.flags->decisions, "decisions");
  if (log.empty()) log = (out_dir(cfg) / "decisions.jsonl").string();
  auto policy = cfg.str(cfg.flags->policy, "policy", "default");
  if (policy != "default" && policy != "disagreement" && policy != "all") {
    throw UsageError("--policy must be default or all");
  }
  auto host = cfg.str(cfg.flags->host, "host", "127.0.0.1");
  int port = cfg.flags->port.value_or(cfg.file.value("port", 8080));
  json options{{"log", log},
               {"policy", policy},
               {"strict", !cfg.flags->no_strict && cfg.file.value("strict", true)},
               {"token", cfg.str(cfg.flags->token, "token")},
               {"cors_origin", cfg.file.value("cors_origin", "*")}};

  Dataset ds;
  Matrix matrix;
  Votes votes;
  load_dataset(cfg, ds);
  load_votes(cfg, ds, matrix, votes);
  if (auto parent = fs::path(log).parent_path(); !parent.empty()) prepare_dir(parent);

  // Block the stop signals in every thread; the main thread waits for them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::unique_ptr<pa_review, void (*)(pa_review*)> review(nullptr, pa_review_free);
  pa_review* raw = nullptr;
  check(pa_review_create(ds.get(), votes.get(), options.dump().c_str(), &raw));
  review.reset(raw);
  int bound = 0;
  check(pa_review_bind(review.get(), host.c_str(), port, &bound));
  std::cout << "listening on http://" << host << ":" << bound << std::endl;

  pa_status serve_status = PA_OK;
  std::thread server([&] { serve_status = pa_review_serve(review.get()); });
  int sig = 0;
  sigwait(&signals, &sig);
  pa_review_stop(review.get());
  server.join();
  check(serve_status);
  return kExitOk;
}

void report_error(const Options& opts, const char* kind, const std::string& message,
                  const std::string& detail_json) {
  if (opts.error_json) {
    if (!detail_json.empty()) {
      std::cerr << detail_json << "\n";
    } else {
      std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
    }
  } else {
    std::cerr << "prefaudit: " << message << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-data audit toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pa_version());
  Options opts;
  app.add_option("--config", opts.config_path, "JSON run config; flags override its values")
      ->check(CLI::ExistingFile);
  app.add_flag("--error-json", opts.error_json, "Print errors as JSON on stderr");

  auto dataset_flags = [&](CLI::App* sub) {
    sub->add_option("--dataset", opts.dataset, "Preference dataset (JSONL)");
    sub->add_option("--markers", opts.markers, "Transcript markers: hh or hash");
    sub->add_flag("--allow-identical", opts.allow_identical,
                  "Keep raw pairs whose responses are identical");
    sub->add_option("--out", opts.out, "Output directory");
  };
  auto matrix_flag = [&](CLI::App* sub) {
    sub->add_option("--matrix", opts.matrix, "Score matrix file");
  };

  auto* score = app.add_subcommand("score", "Score every record with the committee");
  dataset_flags(score);
  matrix_flag(score);
  score->add_option("--committee", opts.committee, "Committee spec (JSON array)");
  score->add_option("--parallelism", opts.parallelism, "Concurrent remote requests");

  auto* judge = app.add_subcommand("judge", "Collect pairwise judge verdicts");
  dataset_flags(judge);
  judge->add_option("--url", opts.url, "Judge endpoint base URL");
  judge->add_option("--mode", opts.mode, "chosen_first or both");
  judge->add_option("--verdicts", opts.verdicts, "Verdicts file (appended)");

  auto* vote = app.add_subcommand("vote", "Write per-record committee votes");
  dataset_flags(vote);
  matrix_flag(vote);

  auto* stats = app.add_subcommand("stats", "Group percentages per split");
  dataset_flags(stats);
  matrix_flag(stats);

  auto* clean = app.add_subcommand("clean", "Apply a cleaning strategy");
  dataset_flags(clean);
  matrix_flag(clean);
  clean->add_option("--strategy", opts.strategy, "sac or a baseline name");
  clean->add_option("--seed", opts.seed, "Run seed (recorded in the report)");
  clean->add_option("--decisions", opts.decisions, "Review decision log to merge");
  clean->add_option("--scorer", opts.scorer, "Scorer for single_rm_*");
  clean->add_option("--fraction", opts.fraction, "Fraction for same_data_rm_*");
  clean->add_option("--verdicts", opts.verdicts, "Judge verdicts for gen_rm_*");
  clean->add_option("--strength-matrix", opts.strength_matrix, "Matrix for same_data_rm_*");
  clean->add_option("--judge-groups", opts.judge_groups, "Groups gen_rm_* may act on");
  clean->add_flag("--remove-helpful-low", opts.remove_helpful_low,
                  "Also remove helpful LowAgree records");

  auto* kappa = app.add_subcommand("kappa", "Inter-annotator agreement per cell");
  dataset_flags(kappa);
  matrix_flag(kappa);
  kappa->add_option("--annotations", opts.annotations, "Annotation file (JSONL)");

  auto* sample = app.add_subcommand("sample", "Stratified annotation sample");
  dataset_flags(sample);
  matrix_flag(sample);
  sample->add_option("--seed", opts.seed, "Sampling seed");
  sample->add_option("--per-group", opts.per_group, "Records per group");
  sample->add_option("--per-split", opts.per_split, "Records per (group, split)");

  auto* eval = app.add_subcommand("eval", "Win/tie/loss, accuracy and reward summaries");
  eval->add_option("--judgments", opts.judgments, "Judgments file");
  eval->add_option("--pairs", opts.pairs, "Score pairs file");
  eval->add_option("--rewards", opts.rewards, "Rewards file");
  eval->add_option("--out", opts.out, "Output directory");

  auto* serve = app.add_subcommand("serve", "Run the review service");
  dataset_flags(serve);
  matrix_flag(serve);
  serve->add_option("--decisions", opts.decisions, "Decision log (appended)");
  serve->add_option("--host", opts.host, "Bind address");
  serve->add_option("--port", opts.port, "Port (0 picks one)");
  serve->add_option("--policy", opts.policy, "Queue policy: default or all");
  serve->add_option("--token", opts.token, "Require this bearer token");
  serve->add_flag("--no-strict", opts.no_strict, "Accept decisions for unqueued records");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    auto cfg = load_config(opts);
    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "score") return cmd_score(cfg);
    if (name == "judge") return cmd_judge(cfg);
    if (name == "vote") return cmd_vote(cfg);
    if (name == "stats") return cmd_stats(cfg);
    if (name == "clean") return cmd_clean(cfg);
    if (name == "kappa") return cmd_kappa(cfg);
    if (name == "sample") return cmd_sample(cfg);
    if (name == "eval") return cmd_eval(cfg);
    if (name == "serve") return cmd_serve(cfg);
    throw UsageError("unknown subcommand " + name);
  } catch (const UsageError& e) {
    report_error(opts, "UsageError", e.what(), "");
    return kExitUsage;
  } catch (const DataError& e) {
    report_error(opts, pa_status_name(e.status), e.what(), e.detail);
    return kExitData;
  } catch (const json::exception& e) {
    report_error(opts, "UsageError", e.what(), "");
    return kExitUsage;
  }
}
