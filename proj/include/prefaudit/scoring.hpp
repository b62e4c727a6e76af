#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefaudit/dataset.hpp"

namespace prefaudit {

enum class ScorerKind { kFile, kHttp, kJudge };

std::string_view to_string(ScorerKind kind) noexcept;
std::optional<ScorerKind> parse_scorer_kind(std::string_view text) noexcept;

struct ScorerId {
  std::string name;
  ScorerKind kind = ScorerKind::kFile;

  friend bool operator==(const ScorerId&, const ScorerId&) = default;
};

struct ScorePair {
  double chosen = 0.0;
  double rejected = 0.0;

  friend bool operator==(const ScorePair&, const ScorePair&) = default;
};

/// Rewards of every committee member for both responses of every record.
/// Rows are keyed by record id; each row holds one pair per scorer, in
/// committee order.
struct ScoreMatrix {
  std::vector<ScorerId> scorers;
  std::map<std::string, std::vector<ScorePair>> entries;
  std::map<std::string, std::string> provenance;

  std::size_t committee_size() const noexcept { return scorers.size(); }
  std::size_t scorer_index(std::string_view name) const;  // throws UnknownScorer
  const std::vector<ScorePair>& row(std::string_view record_id) const;  // throws MissingEntry

  /// Checks row widths, finiteness and, when given, that every id belongs to
  /// `dataset`.
  void validate(const Dataset* dataset = nullptr) const;

  /// Canonical JSONL form: rows sorted by record id, scorers in committee order.
  std::string serialize() const;
  std::string hash() const;
};

/// Reads a score file ({record_id, scorer, reward_chosen, reward_rejected}
/// rows) plus the optional "<path>.meta.json" committee description. Without
/// the sidecar, committee order is order of first appearance.
ScoreMatrix load_score_matrix(const std::filesystem::path& path);
void save_score_matrix(const ScoreMatrix& matrix, const std::filesystem::path& path);

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
};

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual const ScorerId& id() const noexcept = 0;
  /// (reward(context, chosen), reward(context, rejected)).
  virtual ScorePair score_pair(const PreferenceRecord& record) = 0;
  /// Number of remote calls issued so far.
  virtual std::size_t fetches() const noexcept { return 0; }
  virtual bool remote() const noexcept { return false; }
  /// Path or URL, recorded in matrix provenance.
  virtual std::string source() const { return {}; }
};

class FileScorer final : public Scorer {
 public:
  FileScorer(std::string name, std::unordered_map<std::string, ScorePair> entries);
  /// Loads the rows of `path` whose scorer field equals `name`.
  static std::unique_ptr<FileScorer> from_file(std::string name, const std::filesystem::path& path);

  const ScorerId& id() const noexcept override { return id_; }
  ScorePair score_pair(const PreferenceRecord& record) override;
  std::string source() const override { return source_; }

 private:
  ScorerId id_;
  std::unordered_map<std::string, ScorePair> entries_;
  std::string source_;
};

/// POST {base}/score with {context:[{role,text}], response} -> {reward}.
class HttpScorer final : public Scorer {
 public:
  HttpScorer(std::string name, std::string base_url, RetryPolicy retry = {},
             std::chrono::milliseconds timeout = std::chrono::seconds(30));

  const ScorerId& id() const noexcept override { return id_; }
  ScorePair score_pair(const PreferenceRecord& record) override;
  std::size_t fetches() const noexcept override { return fetches_.load(); }
  bool remote() const noexcept override { return true; }
  std::string source() const override { return base_url_; }

 private:
  double score_response(const PreferenceRecord& record, const std::string& response);

  ScorerId id_;
  std::string base_url_;
  RetryPolicy retry_;
  std::chrono::milliseconds timeout_;
  std::atomic<std::size_t> fetches_{0};
};

// ---------------------------------------------------------------------------
// Generative judge

enum class JudgeOrder { kChosenFirst, kRejectedFirst };
enum class JudgeMode { kChosenFirst, kBothOrders };

std::string_view to_string(JudgeOrder order) noexcept;
std::optional<JudgeOrder> parse_judge_order(std::string_view text) noexcept;
std::optional<JudgeMode> parse_judge_mode(std::string_view text) noexcept;

struct JudgePrompt {
  std::string system;
  std::string user;
};

/// Pairwise grading prompt: the context renders into [Question] in "###"
/// transcript style, the two responses fill the Assistant 1/2 slots per order.
JudgePrompt build_judge_prompt(const PreferenceRecord& record, JudgeOrder order);

/// Parses the first line of a judge reply as exactly two whitespace-separated
/// reals. Throws JudgeParseError / JudgeRangeError (scores must lie in [1,10]).
std::pair<double, double> parse_judge_reply(std::string_view reply);

struct JudgeVerdict {
  std::string record_id;
  double score_first = 0.0;
  double score_second = 0.0;
  JudgeOrder order = JudgeOrder::kChosenFirst;
  std::string raw_reply;

  double chosen_score() const noexcept;
  double rejected_score() const noexcept;
};

class JudgeEndpoint {
 public:
  virtual ~JudgeEndpoint() = default;
  virtual std::string complete(const JudgePrompt& prompt) = 0;
};

/// POST {base}/judge with {system, user} -> {reply}.
class HttpJudgeEndpoint final : public JudgeEndpoint {
 public:
  HttpJudgeEndpoint(std::string base_url, RetryPolicy retry = {},
                    std::chrono::milliseconds timeout = std::chrono::seconds(120));
  std::string complete(const JudgePrompt& prompt) override;
  std::size_t fetches() const noexcept { return fetches_.load(); }

 private:
  std::string base_url_;
  RetryPolicy retry_;
  std::chrono::milliseconds timeout_;
  std::atomic<std::size_t> fetches_{0};
};

class FunctionJudgeEndpoint final : public JudgeEndpoint {
 public:
  explicit FunctionJudgeEndpoint(std::function<std::string(const JudgePrompt&)> fn)
      : fn_(std::move(fn)) {}
  std::string complete(const JudgePrompt& prompt) override { return fn_(prompt); }

 private:
  std::function<std::string(const JudgePrompt&)> fn_;
};

JudgeVerdict judge_pair(JudgeEndpoint& endpoint, const PreferenceRecord& record, JudgeOrder order);

/// Per-record (chosen, rejected) judge scores. Verdicts for both orders of one
/// record are averaged per response.
std::map<std::string, ScorePair> judge_scores(const std::vector<JudgeVerdict>& verdicts);

std::vector<JudgeVerdict> load_verdicts(const std::filesystem::path& path);
std::string serialize_verdict(const JudgeVerdict& verdict);

/// A committee member backed by a judge: rewards are the judge's 1-10 scores.
class JudgeScorer final : public Scorer {
 public:
  JudgeScorer(std::string name, std::shared_ptr<JudgeEndpoint> endpoint, JudgeMode mode);

  const ScorerId& id() const noexcept override { return id_; }
  ScorePair score_pair(const PreferenceRecord& record) override;
  std::size_t fetches() const noexcept override { return fetches_.load(); }
  bool remote() const noexcept override { return true; }
  std::string source() const override { return source_; }
  void set_source(std::string source) { source_ = std::move(source); }

 private:
  ScorerId id_;
  std::shared_ptr<JudgeEndpoint> endpoint_;
  std::string source_;
  JudgeMode mode_;
  std::atomic<std::size_t> fetches_{0};
};

struct JudgeRunReport {
  std::size_t judged = 0;
  std::size_t reused = 0;
  std::vector<nlohmann::json> failures;
};

/// Judges every record (optionally only those in `only_ids`), appending
/// verdicts to `verdicts_path`. Verdicts already in the file are reused.
JudgeRunReport run_judge(const Dataset& dataset, JudgeEndpoint& endpoint, JudgeMode mode,
                         const std::filesystem::path& verdicts_path,
                         const std::vector<std::string>* only_ids = nullptr);

// ---------------------------------------------------------------------------
// Committee

/// Committee description as JSON: [{name, kind, path|url, parallelism?,
/// mode?}]. Relative file paths resolve against `base_dir`.
std::vector<std::unique_ptr<Scorer>> make_committee(const nlohmann::json& spec,
                                                    const std::filesystem::path& base_dir = {},
                                                    RetryPolicy retry = {});

struct BuildOptions {
  std::optional<std::filesystem::path> cache_path;
  std::optional<std::filesystem::path> partial_path;
  std::size_t parallelism = 4;
};

struct BuildReport {
  std::size_t cells = 0;
  std::size_t fetched = 0;
  std::size_t from_cache = 0;
  std::vector<nlohmann::json> failed;

  nlohmann::json to_json() const;
};

/// Thread-safe append-only store of fetched cells in score-file format.
class ScoreCache {
 public:
  explicit ScoreCache(std::optional<std::filesystem::path> path);

  std::optional<ScorePair> find(const std::string& record_id, const std::string& scorer) const;
  void store(const std::string& record_id, const std::string& scorer, ScorePair pair);

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, ScorePair> cells_;
};

/// Scores every record with every committee member. Remote cells go through
/// the cache, so a rerun only fetches what is missing. On any failed cell the
/// partial matrix is written and ScoreBuildFailed is thrown listing the cells.
ScoreMatrix build_score_matrix(const Dataset& dataset,
                               const std::vector<std::unique_ptr<Scorer>>& committee,
                               const BuildOptions& options = {}, BuildReport* report = nullptr);

/// Fraction of records on which `scorer` strictly prefers the chosen response.
double scorer_accuracy(const ScoreMatrix& matrix, std::string_view scorer);

/// Scorer with the highest accuracy; ties go to the earliest committee member.
std::string select_best_scorer(const ScoreMatrix& matrix);

}  // namespace prefaudit
