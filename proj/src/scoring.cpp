#include "prefaudit/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include "http_util.hpp"
#include "io_util.hpp"
#include "prefaudit/error.hpp"

namespace prefaudit {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(ScorerKind kind) noexcept {
  switch (kind) {
    case ScorerKind::kFile: return "file";
    case ScorerKind::kHttp: return "http";
    case ScorerKind::kJudge: return "judge";
  }
  return "file";
}

std::optional<ScorerKind> parse_scorer_kind(std::string_view text) noexcept {
  if (text == "file") return ScorerKind::kFile;
  if (text == "http") return ScorerKind::kHttp;
  if (text == "judge") return ScorerKind::kJudge;
  return std::nullopt;
}

// --- ScoreMatrix ------------------------------------------------------------

std::size_t ScoreMatrix::scorer_index(std::string_view name) const {
  for (std::size_t i = 0; i < scorers.size(); ++i) {
    if (scorers[i].name == name) return i;
  }
  throw Error(ErrorCode::kUnknownScorer, "scorer '" + std::string(name) + "' is not in the matrix",
              {{"scorer", name}});
}

const std::vector<ScorePair>& ScoreMatrix::row(std::string_view record_id) const {
  auto it = entries.find(std::string(record_id));
  if (it == entries.end()) {
    throw Error(ErrorCode::kMissingEntry,
                "record '" + std::string(record_id) + "' has no scores in the matrix",
                {{"record_id", record_id}});
  }
  return it->second;
}

void ScoreMatrix::validate(const Dataset* dataset) const {
  if (scorers.empty()) throw Error(ErrorCode::kInvalidArgument, "score matrix has no scorers");
  std::set<std::string> names;
  for (const auto& s : scorers) {
    if (!names.insert(s.name).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate scorer name '" + s.name + "'");
    }
  }
  std::set<std::string_view> ids;
  if (dataset) {
    for (const auto& r : dataset->records) ids.insert(r.id);
  }
  for (const auto& [id, pairs] : entries) {
    if (pairs.size() != scorers.size()) {
      throw Error(ErrorCode::kSchemaViolation,
                  "record '" + id + "' has " + std::to_string(pairs.size()) + " score pairs, expected " +
                      std::to_string(scorers.size()),
                  {{"record_id", id}});
    }
    for (const auto& p : pairs) {
      if (!std::isfinite(p.chosen) || !std::isfinite(p.rejected)) {
        throw Error(ErrorCode::kNonFiniteScore, "record '" + id + "' has a non-finite score",
                    {{"record_id", id}});
      }
    }
    if (dataset && !ids.contains(id)) {
      throw Error(ErrorCode::kUnknownRecord, "matrix row '" + id + "' is not in the dataset",
                  {{"record_id", id}});
    }
  }
}

namespace {

std::string score_row(const std::string& record_id, const std::string& scorer, ScorePair pair) {
  return ordered_json{{"record_id", record_id},
                      {"scorer", scorer},
                      {"reward_chosen", pair.chosen},
                      {"reward_rejected", pair.rejected}}
      .dump();
}

std::filesystem::path meta_path(const std::filesystem::path& path) {
  auto meta = path;
  meta += ".meta.json";
  return meta;
}

}  // namespace

std::string ScoreMatrix::serialize() const {
  std::string out;
  for (const auto& [id, pairs] : entries) {
    for (std::size_t j = 0; j < pairs.size() && j < scorers.size(); ++j) {
      out += score_row(id, scorers[j].name, pairs[j]);
      out.push_back('\n');
    }
  }
  return out;
}

std::string ScoreMatrix::hash() const { return detail::sha256_hex(serialize()); }

void save_score_matrix(const ScoreMatrix& matrix, const std::filesystem::path& path) {
  detail::write_file(path, matrix.serialize());
  ordered_json meta;
  meta["scorers"] = ordered_json::array();
  for (const auto& s : matrix.scorers) {
    meta["scorers"].push_back(ordered_json{{"name", s.name}, {"kind", to_string(s.kind)}});
  }
  meta["provenance"] = matrix.provenance;
  meta["hash"] = matrix.hash();
  detail::write_file(meta_path(path), meta.dump(2) + "\n");
}

ScoreMatrix load_score_matrix(const std::filesystem::path& path) {
  ScoreMatrix matrix;
  std::map<std::string, std::size_t> index;
  auto add_scorer = [&](const std::string& name, ScorerKind kind) {
    if (index.emplace(name, matrix.scorers.size()).second) matrix.scorers.push_back({name, kind});
  };

  const auto sidecar = meta_path(path);
  const bool has_meta = std::filesystem::exists(sidecar);
  if (has_meta) {
    json meta = json::parse(detail::read_file(sidecar), nullptr, false);
    if (meta.is_discarded() || !meta.contains("scorers") || !meta["scorers"].is_array()) {
      throw Error(ErrorCode::kSchemaViolation, sidecar.string() + ": invalid matrix metadata");
    }
    for (const auto& s : meta["scorers"]) {
      auto kind = parse_scorer_kind(s.value("kind", "file"));
      if (!kind || !s.contains("name") || !s["name"].is_string()) {
        throw Error(ErrorCode::kSchemaViolation, sidecar.string() + ": invalid scorer entry");
      }
      add_scorer(s["name"].get<std::string>(), *kind);
    }
    if (meta.contains("provenance") && meta["provenance"].is_object()) {
      for (const auto& [k, v] : meta["provenance"].items()) {
        matrix.provenance[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
  }

  std::map<std::string, std::vector<std::optional<ScorePair>>> cells;
  detail::for_each_jsonl(detail::read_file(path), [&](const json& row, std::size_t line) {
    auto id = detail::require_string(row, "record_id", line);
    auto scorer = detail::require_string(row, "scorer", line);
    ScorePair pair{detail::require_number(row, "reward_chosen", line),
                   detail::require_number(row, "reward_rejected", line)};
    if (!index.contains(scorer)) {
      if (has_meta) {
        throw Error(ErrorCode::kSchemaViolation,
                    "line " + std::to_string(line) + ": scorer '" + scorer + "' not in metadata",
                    {{"line", line}});
      }
      add_scorer(scorer, ScorerKind::kFile);
    }
    auto& slots = cells[id];
    auto j = index.at(scorer);
    if (slots.size() <= j) slots.resize(j + 1);
    if (slots[j]) {
      throw Error(ErrorCode::kSchemaViolation,
                  "line " + std::to_string(line) + ": duplicate cell (" + id + ", " + scorer + ")",
                  {{"line", line}});
    }
    slots[j] = pair;
  });

  for (auto& [id, slots] : cells) {
    slots.resize(matrix.scorers.size());
    std::vector<ScorePair> row;
    for (std::size_t j = 0; j < slots.size(); ++j) {
      if (!slots[j]) {
        throw Error(ErrorCode::kSchemaViolation,
                    "record '" + id + "' lacks a score from '" + matrix.scorers[j].name + "'",
                    {{"record_id", id}, {"scorer", matrix.scorers[j].name}});
      }
      row.push_back(*slots[j]);
    }
    matrix.entries.emplace(id, std::move(row));
  }
  matrix.validate();
  return matrix;
}

// --- Scorers ----------------------------------------------------------------

namespace {

void require_finite(ScorePair pair, const std::string& record_id, const std::string& scorer) {
  if (!std::isfinite(pair.chosen) || !std::isfinite(pair.rejected)) {
    throw Error(ErrorCode::kNonFiniteScore,
                "scorer '" + scorer + "' produced a non-finite reward for '" + record_id + "'",
                {{"record_id", record_id}, {"scorer", scorer}});
  }
}

// Numbers pass through; null and "nan"/"inf" spellings read as non-finite.
std::optional<double> reward_value(const json& value) {
  if (value.is_number()) return value.get<double>();
  if (value.is_null()) return std::nan("");
  if (value.is_string()) {
    auto text = value.get<std::string>();
    std::transform(text.begin(), text.end(), text.begin(), ::tolower);
    if (text == "nan" || text == "-nan") return std::nan("");
    if (text == "inf" || text == "infinity" || text == "+inf") return HUGE_VAL;
    if (text == "-inf" || text == "-infinity") return -HUGE_VAL;
  }
  return std::nullopt;
}

json context_payload(const PreferenceRecord& record) {
  auto context = json::array();
  for (const auto& turn : record.context) {
    context.push_back({{"role", to_string(turn.role)}, {"text", turn.text}});
  }
  return context;
}

}  // namespace

FileScorer::FileScorer(std::string name, std::unordered_map<std::string, ScorePair> entries)
    : id_{std::move(name), ScorerKind::kFile}, entries_(std::move(entries)) {}

std::unique_ptr<FileScorer> FileScorer::from_file(std::string name,
                                                  const std::filesystem::path& path) {
  std::unordered_map<std::string, ScorePair> entries;
  detail::for_each_jsonl(detail::read_file(path), [&](const json& row, std::size_t line) {
    if (detail::require_string(row, "scorer", line) != name) return;
    auto id = detail::require_string(row, "record_id", line);
    auto chosen = row.contains("reward_chosen") ? reward_value(row["reward_chosen"]) : std::nullopt;
    auto rejected =
        row.contains("reward_rejected") ? reward_value(row["reward_rejected"]) : std::nullopt;
    if (!chosen || !rejected) {
      throw Error(ErrorCode::kSchemaViolation,
                  "line " + std::to_string(line) + ": reward fields must be numbers",
                  {{"line", line}});
    }
    if (!entries.emplace(id, ScorePair{*chosen, *rejected}).second) {
      throw Error(ErrorCode::kSchemaViolation,
                  "line " + std::to_string(line) + ": duplicate entry for '" + id + "'",
                  {{"line", line}});
    }
  });
  auto scorer = std::make_unique<FileScorer>(std::move(name), std::move(entries));
  scorer->source_ = path.string();
  return scorer;
}

ScorePair FileScorer::score_pair(const PreferenceRecord& record) {
  auto it = entries_.find(record.id);
  if (it == entries_.end()) {
    throw Error(ErrorCode::kMissingEntry,
                "scorer '" + id_.name + "' has no entry for record '" + record.id + "'",
                {{"record_id", record.id}, {"scorer", id_.name}});
  }
  require_finite(it->second, record.id, id_.name);
  return it->second;
}

HttpScorer::HttpScorer(std::string name, std::string base_url, RetryPolicy retry,
                       std::chrono::milliseconds timeout)
    : id_{std::move(name), ScorerKind::kHttp},
      base_url_(std::move(base_url)),
      retry_(retry),
      timeout_(timeout) {
  detail::parse_base_url(base_url_);
}

double HttpScorer::score_response(const PreferenceRecord& record, const std::string& response) {
  json body{{"context", context_payload(record)}, {"response", response}};
  auto reply = detail::post_json(detail::parse_base_url(base_url_), "/score", body, retry_,
                                 timeout_, ErrorCode::kScorerUnavailable, &fetches_);
  auto it = reply.find("reward");
  auto value = it == reply.end() ? std::nullopt : reward_value(*it);
  if (!value) {
    throw Error(ErrorCode::kScorerUnavailable,
                "scorer '" + id_.name + "' reply lacks a numeric 'reward'",
                {{"scorer", id_.name}, {"record_id", record.id}});
  }
  return *value;
}

ScorePair HttpScorer::score_pair(const PreferenceRecord& record) {
  ScorePair pair{score_response(record, record.chosen), score_response(record, record.rejected)};
  require_finite(pair, record.id, id_.name);
  return pair;
}

// --- Committee ----------------------------------------------------------------

std::vector<std::unique_ptr<Scorer>> make_committee(const json& spec,
                                                    const std::filesystem::path& base_dir,
                                                    RetryPolicy retry) {
  if (!spec.is_array() || spec.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "committee must be a non-empty array");
  }
  std::vector<std::unique_ptr<Scorer>> committee;
  std::set<std::string> names;
  for (const auto& entry : spec) {
    if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string()) {
      throw Error(ErrorCode::kInvalidArgument, "committee entries need a string 'name'");
    }
    auto name = entry["name"].get<std::string>();
    if (!names.insert(name).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate scorer name '" + name + "'");
    }
    auto kind = parse_scorer_kind(entry.value("kind", "file"));
    if (!kind) {
      throw Error(ErrorCode::kInvalidArgument, "scorer '" + name + "' has an unknown kind");
    }
    switch (*kind) {
      case ScorerKind::kFile: {
        if (!entry.contains("path")) {
          throw Error(ErrorCode::kInvalidArgument, "file scorer '" + name + "' needs 'path'");
        }
        std::filesystem::path path = entry["path"].get<std::string>();
        if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
        committee.push_back(FileScorer::from_file(name, path));
        break;
      }
      case ScorerKind::kHttp: {
        if (!entry.contains("url")) {
          throw Error(ErrorCode::kInvalidArgument, "http scorer '" + name + "' needs 'url'");
        }
        committee.push_back(
            std::make_unique<HttpScorer>(name, entry["url"].get<std::string>(), retry));
        break;
      }
      case ScorerKind::kJudge: {
        if (!entry.contains("url")) {
          throw Error(ErrorCode::kInvalidArgument, "judge scorer '" + name + "' needs 'url'");
        }
        auto mode = parse_judge_mode(entry.value("mode", "chosen_first"));
        if (!mode) throw Error(ErrorCode::kInvalidArgument, "judge '" + name + "': bad mode");
        auto url = entry["url"].get<std::string>();
        auto scorer = std::make_unique<JudgeScorer>(
            name, std::make_shared<HttpJudgeEndpoint>(url, retry), *mode);
        scorer->set_source(url);
        committee.push_back(std::move(scorer));
        break;
      }
    }
  }
  return committee;
}

// --- Cache ----------------------------------------------------------------------

ScoreCache::ScoreCache(std::optional<std::filesystem::path> path) : path_(std::move(path)) {
  if (!path_ || !std::filesystem::exists(*path_)) return;
  std::ifstream in(*path_);
  std::string line;
  while (std::getline(in, line)) {
    // A torn final line from an interrupted run is skipped and refetched.
    json row = json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object()) continue;
    if (!row.contains("record_id") || !row.contains("scorer")) continue;
    auto c = row.value("reward_chosen", json());
    auto r = row.value("reward_rejected", json());
    if (!c.is_number() || !r.is_number()) continue;
    cells_[{row["record_id"].get<std::string>(), row["scorer"].get<std::string>()}] =
        ScorePair{c.get<double>(), r.get<double>()};
  }
}

std::optional<ScorePair> ScoreCache::find(const std::string& record_id,
                                          const std::string& scorer) const {
  std::lock_guard lock(mutex_);
  auto it = cells_.find({record_id, scorer});
  if (it == cells_.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::store(const std::string& record_id, const std::string& scorer, ScorePair pair) {
  std::lock_guard lock(mutex_);
  cells_[{record_id, scorer}] = pair;
  if (!path_) return;
  std::ofstream out(*path_, std::ios::app);
  if (!out) throw Error(ErrorCode::kIo, "cannot append to cache " + path_->string());
  out << score_row(record_id, scorer, pair) << '\n';
  out.flush();
}

// --- Build ------------------------------------------------------------------------

json BuildReport::to_json() const {
  return json{{"cells", cells}, {"fetched", fetched}, {"from_cache", from_cache},
              {"failed", failed}};
}

ScoreMatrix build_score_matrix(const Dataset& dataset,
                               const std::vector<std::unique_ptr<Scorer>>& committee,
                               const BuildOptions& options, BuildReport* report_out) {
  if (committee.empty()) throw Error(ErrorCode::kInvalidArgument, "committee is empty");
  {
    std::set<std::string> names;
    for (const auto& s : committee) {
      if (!names.insert(s->id().name).second) {
        throw Error(ErrorCode::kInvalidArgument, "duplicate scorer name '" + s->id().name + "'");
      }
    }
  }

  const auto n = dataset.size();
  const auto m = committee.size();
  std::vector<std::vector<std::optional<ScorePair>>> cells(n, std::vector<std::optional<ScorePair>>(m));
  std::vector<std::vector<std::string>> failures(n, std::vector<std::string>(m));
  ScoreCache cache(options.cache_path);
  BuildReport report;
  report.cells = n * m;
  std::atomic<std::size_t> fetched{0};

  auto run_cell = [&](std::size_t i, std::size_t j) {
    const auto& record = dataset.records[i];
    auto& scorer = *committee[j];
    try {
      auto pair = scorer.score_pair(record);
      require_finite(pair, record.id, scorer.id().name);
      cells[i][j] = pair;
      if (scorer.remote()) cache.store(record.id, scorer.id().name, pair);
    } catch (const Error& e) {
      failures[i][j] = std::string(error_code_name(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      failures[i][j] = std::string("Internal: ") + e.what();
    }
  };

  std::vector<std::thread> workers;
  for (std::size_t j = 0; j < m; ++j) {
    auto& scorer = *committee[j];
    if (!scorer.remote()) {
      for (std::size_t i = 0; i < n; ++i) run_cell(i, j);
      continue;
    }
    auto pending = std::make_shared<std::vector<std::size_t>>();
    for (std::size_t i = 0; i < n; ++i) {
      if (auto hit = cache.find(dataset.records[i].id, scorer.id().name)) {
        cells[i][j] = *hit;
        ++report.from_cache;
      } else {
        pending->push_back(i);
      }
    }
    fetched += pending->size();
    auto next = std::make_shared<std::atomic<std::size_t>>(0);
    auto threads = std::min(std::max<std::size_t>(1, options.parallelism), pending->size());
    for (std::size_t t = 0; t < threads; ++t) {
      workers.emplace_back([=, &run_cell] {
        for (auto k = (*next)++; k < pending->size(); k = (*next)++) run_cell((*pending)[k], j);
      });
    }
  }
  for (auto& w : workers) w.join();
  report.fetched = fetched.load();

  ScoreMatrix matrix;
  for (const auto& s : committee) {
    matrix.scorers.push_back(s->id());
    matrix.provenance["scorer." + s->id().name] =
        std::string(to_string(s->id().kind)) + (s->source().empty() ? "" : ":" + s->source());
  }
  matrix.provenance["records"] = std::to_string(n);
  matrix.provenance["committee_size"] = std::to_string(m);

  std::string partial;
  for (std::size_t i = 0; i < n; ++i) {
    bool complete = true;
    for (std::size_t j = 0; j < m; ++j) {
      if (cells[i][j]) {
        partial += score_row(dataset.records[i].id, committee[j]->id().name, *cells[i][j]);
        partial.push_back('\n');
      } else {
        complete = false;
        report.failed.push_back(json{{"record_id", dataset.records[i].id},
                                     {"scorer", committee[j]->id().name},
                                     {"error", failures[i][j]}});
      }
    }
    if (complete) {
      std::vector<ScorePair> row;
      for (auto& c : cells[i]) row.push_back(*c);
      matrix.entries.emplace(dataset.records[i].id, std::move(row));
    }
  }
  if (report_out) *report_out = report;

  if (!report.failed.empty()) {
    if (options.partial_path) detail::write_file(*options.partial_path, partial);
    throw Error(ErrorCode::kScoreBuildFailed,
                std::to_string(report.failed.size()) + " of " + std::to_string(report.cells) +
                    " score cells failed",
                {{"failed", report.failed},
                 {"partial_path", options.partial_path ? options.partial_path->string() : ""}});
  }
  return matrix;
}

// --- Accuracy ---------------------------------------------------------------------

double scorer_accuracy(const ScoreMatrix& matrix, std::string_view scorer) {
  const auto j = matrix.scorer_index(scorer);
  if (matrix.entries.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& [id, row] : matrix.entries) {
    if (row.at(j).chosen > row.at(j).rejected) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(matrix.entries.size());
}

std::string select_best_scorer(const ScoreMatrix& matrix) {
  if (matrix.scorers.empty()) throw Error(ErrorCode::kInvalidArgument, "matrix has no scorers");
  std::string best = matrix.scorers.front().name;
  double best_accuracy = -1.0;
  for (const auto& s : matrix.scorers) {
    auto accuracy = scorer_accuracy(matrix, s.name);
    if (accuracy > best_accuracy) {
      best_accuracy = accuracy;
      best = s.name;
    }
  }
  return best;
}

}  // namespace prefaudit
