#include "prefaudit/prefaudit.h"

#include <cstring>
#include <string>

#include "io_util.hpp"
#include "prefaudit/annotation.hpp"
#include "prefaudit/cleaning.hpp"
#include "prefaudit/dataset.hpp"
#include "prefaudit/error.hpp"
#include "prefaudit/evaluation.hpp"
#include "prefaudit/review.hpp"
#include "prefaudit/scoring.hpp"
#include "prefaudit/voting.hpp"

using nlohmann::json;
using nlohmann::ordered_json;
namespace pa = prefaudit;

struct pa_dataset {
  pa::Dataset value;
};
struct pa_matrix {
  pa::ScoreMatrix value;
};
struct pa_votes {
  std::vector<pa::VoteRecord> value;
};
struct pa_actions {
  std::vector<pa::CleanAction> value;
  const pa_dataset* dataset = nullptr;
};
struct pa_review {
  std::unique_ptr<pa::ReviewService> service;
  std::unique_ptr<pa::ReviewServer> server;
};

namespace {

thread_local std::string g_error_message;
thread_local std::string g_error_json;

pa_status fail(const pa::Error& e) {
  g_error_message = e.what();
  g_error_json = e.to_json().dump();
  return static_cast<pa_status>(e.code());
}

// Runs `fn`, translating exceptions into a status and the thread's last error.
template <typename Fn>
pa_status guarded(Fn&& fn) noexcept {
  try {
    fn();
    return PA_OK;
  } catch (const pa::Error& e) {
    return fail(e);
  } catch (const json::exception& e) {
    return fail(pa::Error(pa::ErrorCode::kSchemaViolation, e.what()));
  } catch (const std::bad_alloc&) {
    return fail(pa::Error(pa::ErrorCode::kInternal, "out of memory"));
  } catch (const std::exception& e) {
    return fail(pa::Error(pa::ErrorCode::kInternal, e.what()));
  }
}

void require(bool condition, const char* what) {
  if (!condition) throw pa::Error(pa::ErrorCode::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void emit(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

json parse_json_arg(const char* text, const char* what) {
  if (!text || !*text) return json::object();
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) {
    throw pa::Error(pa::ErrorCode::kInvalidArgument, std::string(what) + " is not valid JSON");
  }
  return value;
}

}  // namespace

extern "C" {

const char* pa_version(void) { return "0.3.0"; }

const char* pa_status_name(pa_status status) {
  static thread_local std::string name;
  name = std::string(pa::error_code_name(static_cast<pa::ErrorCode>(status)));
  return name.c_str();
}

const char* pa_last_error_message(void) { return g_error_message.c_str(); }
const char* pa_last_error_json(void) { return g_error_json.c_str(); }
void pa_string_free(char* s) { std::free(s); }

// --- dataset -------------------------------------------------------------------

pa_status pa_dataset_load(const char* path, const char* markers, int allow_identical,
                          pa_dataset** out) {
  return guarded([&] {
    require(path && out, "pa_dataset_load: null argument");
    pa::LoadOptions options;
    options.markers = pa::MarkerStyle::from_name(markers ? markers : "hh");
    options.allow_identical = allow_identical != 0;
    auto handle = std::make_unique<pa_dataset>();
    handle->value = pa::load_dataset(path, options);
    *out = handle.release();
  });
}

pa_status pa_dataset_save(const pa_dataset* dataset, const char* path) {
  return guarded([&] {
    require(dataset && path, "pa_dataset_save: null argument");
    pa::save_dataset(dataset->value.records, path);
  });
}

size_t pa_dataset_size(const pa_dataset* dataset) { return dataset ? dataset->value.size() : 0; }

pa_status pa_dataset_report_json(const pa_dataset* dataset, char** out_json) {
  return guarded([&] {
    require(dataset && out_json, "pa_dataset_report_json: null argument");
    emit(out_json, dataset->value.report.to_json().dump());
  });
}

void pa_dataset_free(pa_dataset* dataset) { delete dataset; }

pa_status pa_parse_transcript(const char* raw, const char* markers, char** out_json) {
  return guarded([&] {
    require(raw && out_json, "pa_parse_transcript: null argument");
    auto turns = pa::parse_transcript(raw, pa::MarkerStyle::from_name(markers ? markers : "hh"));
    auto arr = ordered_json::array();
    for (const auto& t : turns) arr.push_back({{"role", pa::to_string(t.role)}, {"text", t.text}});
    emit(out_json, arr.dump());
  });
}

// --- scoring -------------------------------------------------------------------

pa_status pa_matrix_build(const pa_dataset* dataset, const char* committee_json,
                          const char* base_dir, const char* cache_path, const char* partial_path,
                          int parallelism, pa_matrix** out, char** report_json) {
  pa::BuildReport report;
  auto status = guarded([&] {
    require(dataset && committee_json && out, "pa_matrix_build: null argument");
    auto committee = pa::make_committee(parse_json_arg(committee_json, "committee"),
                                        base_dir ? std::filesystem::path(base_dir) : "");
    pa::BuildOptions options;
    if (cache_path) options.cache_path = cache_path;
    if (partial_path) options.partial_path = partial_path;
    if (parallelism > 0) options.parallelism = static_cast<std::size_t>(parallelism);
    auto handle = std::make_unique<pa_matrix>();
    handle->value = pa::build_score_matrix(dataset->value, committee, options, &report);
    *out = handle.release();
  });
  if (report_json) {
    try {
      *report_json = dup_string(report.to_json().dump());
    } catch (...) {
      *report_json = nullptr;
    }
  }
  return status;
}

pa_status pa_matrix_load(const char* path, pa_matrix** out) {
  return guarded([&] {
    require(path && out, "pa_matrix_load: null argument");
    auto handle = std::make_unique<pa_matrix>();
    handle->value = pa::load_score_matrix(path);
    *out = handle.release();
  });
}

pa_status pa_matrix_save(const pa_matrix* matrix, const char* path) {
  return guarded([&] {
    require(matrix && path, "pa_matrix_save: null argument");
    pa::save_score_matrix(matrix->value, path);
  });
}

pa_status pa_matrix_hash(const pa_matrix* matrix, char** out_hex) {
  return guarded([&] {
    require(matrix && out_hex, "pa_matrix_hash: null argument");
    emit(out_hex, matrix->value.hash());
  });
}

size_t pa_matrix_committee_size(const pa_matrix* matrix) {
  return matrix ? matrix->value.committee_size() : 0;
}

pa_status pa_matrix_scorer_accuracy(const pa_matrix* matrix, const char* scorer, double* out) {
  return guarded([&] {
    require(matrix && scorer && out, "pa_matrix_scorer_accuracy: null argument");
    *out = pa::scorer_accuracy(matrix->value, scorer);
  });
}

void pa_matrix_free(pa_matrix* matrix) { delete matrix; }

pa_status pa_judge_run(const pa_dataset* dataset, const char* url, const char* mode,
                       const char* verdicts_path, char** report_json) {
  return guarded([&] {
    require(dataset && url && verdicts_path, "pa_judge_run: null argument");
    auto judge_mode = pa::parse_judge_mode(mode ? mode : "chosen_first");
    require(judge_mode.has_value(), "judge mode must be chosen_first or both");
    pa::HttpJudgeEndpoint endpoint(url);
    auto report = pa::run_judge(dataset->value, endpoint, *judge_mode, verdicts_path);
    json body{{"judged", report.judged}, {"reused", report.reused}, {"failures", report.failures}};
    emit(report_json, body.dump());
    if (!report.failures.empty()) {
      throw pa::Error(pa::ErrorCode::kEndpointError,
                      std::to_string(report.failures.size()) + " judge calls failed",
                      {{"failures", report.failures}});
    }
  });
}

pa_status pa_parse_judge_reply(const char* reply, double* out_first, double* out_second) {
  return guarded([&] {
    require(reply && out_first && out_second, "pa_parse_judge_reply: null argument");
    std::tie(*out_first, *out_second) = pa::parse_judge_reply(reply);
  });
}

// --- voting ----------------------------------------------------------------------

pa_status pa_votes_compute(const pa_dataset* dataset, const pa_matrix* matrix, pa_votes** out) {
  return guarded([&] {
    require(dataset && matrix && out, "pa_votes_compute: null argument");
    matrix->value.validate(&dataset->value);
    auto handle = std::make_unique<pa_votes>();
    handle->value = pa::vote_all(matrix->value, dataset->value);
    *out = handle.release();
  });
}

pa_status pa_votes_save(const pa_votes* votes, const char* path) {
  return guarded([&] {
    require(votes && path, "pa_votes_save: null argument");
    pa::detail::write_file(path, pa::serialize_votes(votes->value));
  });
}

void pa_votes_free(pa_votes* votes) { delete votes; }

pa_status pa_vote_group(int v, int committee_size, int* out_group) {
  return guarded([&] {
    require(out_group, "pa_vote_group: null argument");
    *out_group = static_cast<int>(pa::group(v, committee_size));
  });
}

pa_status pa_stats(const pa_dataset* dataset, const pa_votes* votes, const pa_matrix* matrix,
                   char** out_json, char** out_text) {
  return guarded([&] {
    require(dataset && votes, "pa_stats: null argument");
    auto stats = pa::group_stats(dataset->value, votes->value);
    if (matrix) stats.scorer_ties = pa::scorer_ties(matrix->value);
    auto histogram = pa::vote_histogram(dataset->value, votes->value);
    auto body = stats.to_json();
    body["histogram"] = ordered_json::parse(pa::histogram_json(histogram).dump());
    emit(out_json, body.dump(2));
    emit(out_text, stats.render());
  });
}

// --- cleaning --------------------------------------------------------------------

int pa_strategy_known(const char* name) { return name && pa::is_known_strategy(name) ? 1 : 0; }

pa_status pa_clean_plan(const pa_dataset* dataset, const pa_votes* votes, const pa_matrix* matrix,
                        const char* strategy, const char* params_json, pa_actions** out) {
  return guarded([&] {
    require(dataset && votes && strategy && out, "pa_clean_plan: null argument");
    auto params = parse_json_arg(params_json, "params");
    pa::StrategyConfig config;
    config.name = strategy;
    if (!pa::is_known_strategy(config.name)) {
      throw pa::Error(pa::ErrorCode::kUnknownStrategy, "unknown strategy '" + config.name + "'",
                      {{"strategy", config.name}});
    }
    config.sac.remove_helpful_low = params.value("remove_helpful_low", false);
    config.aux.matrix = matrix ? &matrix->value : nullptr;
    if (params.contains("scorer") && params["scorer"].is_string()) {
      config.aux.scorer = params["scorer"].get<std::string>();
    }
    config.aux.fraction = params.value("fraction", 0.10);

    const bool gen_rm = config.name.starts_with("gen_rm");
    const bool same_data = config.name.starts_with("same_data_rm");
    if (gen_rm && params.contains("verdicts")) {
      config.aux.judge_scores =
          pa::judge_scores(pa::load_verdicts(params["verdicts"].get<std::string>()));
    }
    if (gen_rm && params.contains("judge_groups")) {
      std::set<pa::Group> groups;
      for (const auto& g : params["judge_groups"]) {
        auto parsed = pa::parse_group(g.get<std::string>());
        require(parsed.has_value(), "judge_groups: unknown group name");
        groups.insert(*parsed);
      }
      config.aux.judge_groups = std::move(groups);
    }
    if (same_data) {
      if (params.contains("strength_matrix")) {
        auto strength_matrix = pa::load_score_matrix(params["strength_matrix"].get<std::string>());
        config.aux.strengths = pa::preference_strengths(strength_matrix, dataset->value);
      } else if (matrix) {
        config.aux.strengths = pa::preference_strengths(matrix->value, dataset->value);
      }
    }
    auto handle = std::make_unique<pa_actions>();
    handle->value = pa::run_strategy(config, dataset->value, votes->value);
    handle->dataset = dataset;
    *out = handle.release();
  });
}

pa_status pa_actions_merge_decisions(pa_actions* actions, const char* decisions_path) {
  return guarded([&] {
    require(actions && decisions_path, "pa_actions_merge_decisions: null argument");
    auto decisions = pa::load_annotations(decisions_path, /*allow_uncertain=*/true);
    actions->value = pa::merge_overrides(actions->value, decisions);
  });
}

size_t pa_actions_size(const pa_actions* actions) { return actions ? actions->value.size() : 0; }

void pa_actions_free(pa_actions* actions) { delete actions; }

pa_status pa_clean_materialize(const pa_dataset* dataset, const pa_votes* votes,
                               const pa_actions* actions, const char* config_json,
                               const char* cleaned_path, const char* actions_path,
                               const char* report_json_path, const char* report_text_path,
                               char** out_report_json) {
  return guarded([&] {
    require(dataset && votes && actions, "pa_clean_materialize: null argument");
    auto config = parse_json_arg(config_json, "config");
    auto strategy = config.value("strategy", std::string());
    auto result =
        pa::materialize(dataset->value, actions->value, votes->value, strategy, config);
    auto report = result.report.to_json().dump(2) + "\n";
    if (cleaned_path) pa::save_dataset(result.records, cleaned_path);
    if (actions_path) pa::detail::write_file(actions_path, pa::serialize_actions(actions->value));
    if (report_json_path) pa::detail::write_file(report_json_path, report);
    if (report_text_path) pa::detail::write_file(report_text_path, result.report.render());
    emit(out_report_json, report);
  });
}

// --- annotation ------------------------------------------------------------------

pa_status pa_sample(const pa_dataset* dataset, const pa_votes* votes, int per_group,
                    int per_split, uint64_t seed, char** out_ids_json) {
  return guarded([&] {
    require(dataset && votes && out_ids_json, "pa_sample: null argument");
    auto ids = pa::stratified_sample(dataset->value, votes->value, per_group, per_split, seed);
    emit(out_ids_json, json(ids).dump());
  });
}

pa_status pa_kappa_report(const pa_dataset* dataset, const pa_votes* votes,
                          const char* annotations_path, char** out_json, char** out_text) {
  return guarded([&] {
    require(dataset && votes && annotations_path, "pa_kappa_report: null argument");
    auto annotations = pa::load_annotations(annotations_path);
    auto cells = pa::label_distribution(dataset->value, votes->value, annotations);
    emit(out_json, pa::distribution_json(cells).dump(2));
    emit(out_text, pa::render_distribution(cells));
  });
}

pa_status pa_fleiss_kappa(const int* counts, size_t items, size_t categories, int raters,
                          double* out_kappa, int* out_perfect_flag) {
  return guarded([&] {
    require(out_kappa && (counts || items == 0), "pa_fleiss_kappa: null argument");
    pa::KappaInput input;
    input.raters = raters;
    for (size_t i = 0; i < items; ++i) {
      input.counts.emplace_back(counts + i * categories, counts + (i + 1) * categories);
    }
    auto result = pa::fleiss_kappa(input);
    *out_kappa = result.kappa;
    if (out_perfect_flag) *out_perfect_flag = result.perfect_agreement_flag ? 1 : 0;
  });
}

// --- evaluation ------------------------------------------------------------------

pa_status pa_eval(const char* judgments_path, const char* pairs_path, const char* rewards_path,
                  char** out_json, char** out_text) {
  return guarded([&] {
    require(judgments_path || pairs_path || rewards_path,
            "pa_eval: at least one of judgments, pairs or rewards is required");
    ordered_json body = ordered_json::object();
    std::string text;
    if (judgments_path) {
      auto report = pa::tally(pa::load_judgments(judgments_path));
      body["tally"] = report.to_json();
      text += report.render();
    }
    if (pairs_path) {
      auto accuracy = pa::pref_accuracy(pa::load_score_pairs(pairs_path));
      body["pref_accuracy"] = accuracy;
      text += "preference accuracy " + pa::detail::format_fixed(100.0 * accuracy, 1) + "%\n";
    }
    if (rewards_path) {
      auto summary = pa::avg_reward(pa::load_rewards(rewards_path));
      body["avg_reward"] = {{"mean", summary.mean}, {"stderr", summary.stderr_}, {"n", summary.n}};
      text += "average reward " + pa::detail::format_fixed(summary.mean, 2) + " (stderr " +
              pa::detail::format_fixed(summary.stderr_, 2) + ", n=" + std::to_string(summary.n) +
              ")\n";
    }
    emit(out_json, body.dump(2));
    emit(out_text, text);
  });
}

// --- review ----------------------------------------------------------------------

pa_status pa_review_create(const pa_dataset* dataset, const pa_votes* votes,
                           const char* options_json, pa_review** out) {
  return guarded([&] {
    require(dataset && votes && out, "pa_review_create: null argument");
    auto params = parse_json_arg(options_json, "options");
    pa::ReviewOptions options;
    require(params.contains("log") && params["log"].is_string(), "review options need 'log'");
    options.log_path = params["log"].get<std::string>();
    auto policy = pa::parse_queue_policy(params.value("policy", "default"));
    require(policy.has_value(), "review policy must be default or all");
    options.policy = *policy;
    options.strict = params.value("strict", true);
    if (params.contains("token") && params["token"].is_string() &&
        !params["token"].get<std::string>().empty()) {
      options.bearer_token = params["token"].get<std::string>();
    }
    options.cors_origin = params.value("cors_origin", "*");
    auto handle = std::make_unique<pa_review>();
    handle->service =
        std::make_unique<pa::ReviewService>(dataset->value, votes->value, std::move(options));
    handle->server = std::make_unique<pa::ReviewServer>(*handle->service);
    *out = handle.release();
  });
}

pa_status pa_review_bind(pa_review* review, const char* host, int port, int* out_port) {
  return guarded([&] {
    require(review && host, "pa_review_bind: null argument");
    int bound = review->server->bind(host, port);
    if (out_port) *out_port = bound;
  });
}

pa_status pa_review_serve(pa_review* review) {
  return guarded([&] {
    require(review, "pa_review_serve: null argument");
    review->server->listen_after_bind();
  });
}

void pa_review_stop(pa_review* review) {
  if (review && review->server) review->server->stop();
}

void pa_review_free(pa_review* review) { delete review; }

}  // extern "C"
