/*
 * C interface to the preference-data audit library.
 *
 * Objects are opaque handles created by pa_*_load / pa_*_compute / ... and
 * released with the matching pa_*_free. Every fallible call returns a
 * pa_status; on failure, pa_last_error_message() and pa_last_error_json()
 * describe the error for the calling thread until its next failing call.
 * Strings returned through char** out-parameters are owned by the caller and
 * must be released with pa_string_free.
 */
#ifndef PREFAUDIT_PREFAUDIT_H_
#define PREFAUDIT_PREFAUDIT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PA_API __declspec(dllexport)
#else
#define PA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pa_status {
  PA_OK = 0,
  PA_E_INVALID_ARGUMENT = 1,
  PA_E_IO = 2,
  PA_E_SCHEMA_VIOLATION = 3,
  PA_E_MALFORMED_TRANSCRIPT = 4,
  PA_E_DIVERGENCE_NOT_AT_TAIL = 5,
  PA_E_ROLE_MISMATCH = 6,
  PA_E_IDENTICAL_RESPONSES = 7,
  PA_E_SCORER_UNAVAILABLE = 8,
  PA_E_NON_FINITE_SCORE = 9,
  PA_E_MISSING_ENTRY = 10,
  PA_E_JUDGE_PARSE = 11,
  PA_E_JUDGE_RANGE = 12,
  PA_E_ENDPOINT = 13,
  PA_E_UNKNOWN_SCORER = 14,
  PA_E_OUT_OF_RANGE = 15,
  PA_E_MISSING_VOTE = 16,
  PA_E_UNKNOWN_STRATEGY = 17,
  PA_E_MISSING_AUX = 18,
  PA_E_ACTION_COVERAGE_GAP = 19,
  PA_E_UNKNOWN_RECORD = 20,
  PA_E_SAMPLE_SHORTFALL = 21,
  PA_E_ARITY = 22,
  PA_E_INVALID_TABLE = 23,
  PA_E_INCOMPLETE_ANNOTATIONS = 24,
  PA_E_EMPTY_INPUT = 25,
  PA_E_SCORE_BUILD_FAILED = 26,
  PA_E_INTERNAL = 99
} pa_status;

typedef struct pa_dataset pa_dataset;
typedef struct pa_matrix pa_matrix;
typedef struct pa_votes pa_votes;
typedef struct pa_actions pa_actions;
typedef struct pa_review pa_review;

PA_API const char* pa_version(void);
PA_API const char* pa_status_name(pa_status status);
PA_API const char* pa_last_error_message(void);
/* {"error", "code", "message", "details"} for the last failure. */
PA_API const char* pa_last_error_json(void);
PA_API void pa_string_free(char* s);

/* ---- dataset ------------------------------------------------------------ */

/* markers: "hh" (default when NULL) or "hash". allow_identical applies to raw
 * {chosen, rejected} transcript rows. */
PA_API pa_status pa_dataset_load(const char* path, const char* markers, int allow_identical,
                                 pa_dataset** out);
PA_API pa_status pa_dataset_save(const pa_dataset* dataset, const char* path);
PA_API size_t pa_dataset_size(const pa_dataset* dataset);
PA_API pa_status pa_dataset_report_json(const pa_dataset* dataset, char** out_json);
PA_API void pa_dataset_free(pa_dataset* dataset);

/* Parses one transcript into [{role, text}] JSON. */
PA_API pa_status pa_parse_transcript(const char* raw, const char* markers, char** out_json);

/* ---- scoring ------------------------------------------------------------ */

/* committee_json: [{name, kind: file|http|judge, path|url, mode?}]. Relative
 * file paths resolve against base_dir (may be NULL). cache_path and
 * partial_path may be NULL. On PA_E_SCORE_BUILD_FAILED the failed cells are
 * listed in pa_last_error_json() and the partial matrix has been written.
 * report_json (may be NULL) receives {cells, fetched, from_cache, failed}. */
PA_API pa_status pa_matrix_build(const pa_dataset* dataset, const char* committee_json,
                                 const char* base_dir, const char* cache_path,
                                 const char* partial_path, int parallelism, pa_matrix** out,
                                 char** report_json);
PA_API pa_status pa_matrix_load(const char* path, pa_matrix** out);
/* Writes the score file plus "<path>.meta.json". */
PA_API pa_status pa_matrix_save(const pa_matrix* matrix, const char* path);
PA_API pa_status pa_matrix_hash(const pa_matrix* matrix, char** out_hex);
PA_API size_t pa_matrix_committee_size(const pa_matrix* matrix);
PA_API pa_status pa_matrix_scorer_accuracy(const pa_matrix* matrix, const char* scorer,
                                           double* out);
PA_API void pa_matrix_free(pa_matrix* matrix);

/* Judges every record through POST {url}/judge and appends verdicts to
 * verdicts_path. mode: "chosen_first" or "both". */
PA_API pa_status pa_judge_run(const pa_dataset* dataset, const char* url, const char* mode,
                              const char* verdicts_path, char** report_json);
/* Parses the first line of a judge reply into two scores. */
PA_API pa_status pa_parse_judge_reply(const char* reply, double* out_first, double* out_second);

/* ---- voting ------------------------------------------------------------- */

PA_API pa_status pa_votes_compute(const pa_dataset* dataset, const pa_matrix* matrix,
                                  pa_votes** out);
PA_API pa_status pa_votes_save(const pa_votes* votes, const char* path);
PA_API void pa_votes_free(pa_votes* votes);
/* 0 NoAgree, 1 LowAgree, 2 HighAgree, 3 AllAgree. */
PA_API pa_status pa_vote_group(int v, int committee_size, int* out_group);

/* Group percentages per split plus the vote histogram; matrix may be NULL
 * (then per-scorer tie counts are omitted). */
PA_API pa_status pa_stats(const pa_dataset* dataset, const pa_votes* votes,
                          const pa_matrix* matrix, char** out_json, char** out_text);

/* ---- cleaning ----------------------------------------------------------- */

PA_API int pa_strategy_known(const char* name);

/* params_json keys (all optional): remove_helpful_low (bool), scorer
 * (string), fraction (number), verdicts (path), judge_groups ([group names]),
 * strength_matrix (path). matrix supplies single_rm scores and default
 * same_data_rm strengths. */
PA_API pa_status pa_clean_plan(const pa_dataset* dataset, const pa_votes* votes,
                               const pa_matrix* matrix, const char* strategy,
                               const char* params_json, pa_actions** out);
/* Applies the decision log at decisions_path on top of the plan. */
PA_API pa_status pa_actions_merge_decisions(pa_actions* actions, const char* decisions_path);
PA_API size_t pa_actions_size(const pa_actions* actions);
PA_API void pa_actions_free(pa_actions* actions);

/* Writes cleaned dataset, actions JSONL and report (JSON + text); any path
 * may be NULL to skip that output. config_json is echoed into the report. */
PA_API pa_status pa_clean_materialize(const pa_dataset* dataset, const pa_votes* votes,
                                      const pa_actions* actions, const char* config_json,
                                      const char* cleaned_path, const char* actions_path,
                                      const char* report_json_path, const char* report_text_path,
                                      char** out_report_json);

/* ---- annotation --------------------------------------------------------- */

PA_API pa_status pa_sample(const pa_dataset* dataset, const pa_votes* votes, int per_group,
                           int per_split, uint64_t seed, char** out_ids_json);
PA_API pa_status pa_kappa_report(const pa_dataset* dataset, const pa_votes* votes,
                                 const char* annotations_path, char** out_json, char** out_text);
/* counts: row-major items x categories. */
PA_API pa_status pa_fleiss_kappa(const int* counts, size_t items, size_t categories, int raters,
                                 double* out_kappa, int* out_perfect_flag);

/* ---- evaluation --------------------------------------------------------- */

/* Any of the three paths may be NULL; at least one is required. */
PA_API pa_status pa_eval(const char* judgments_path, const char* pairs_path,
                         const char* rewards_path, char** out_json, char** out_text);

/* ---- review service ----------------------------------------------------- */

/* options_json: {log (path, required), policy: default|all, strict (bool),
 * token (string), cors_origin (string)}. */
PA_API pa_status pa_review_create(const pa_dataset* dataset, const pa_votes* votes,
                                  const char* options_json, pa_review** out);
/* Binds host:port (port 0 picks one) and reports the bound port. */
PA_API pa_status pa_review_bind(pa_review* review, const char* host, int port, int* out_port);
/* Serves until pa_review_stop is called from another thread. */
PA_API pa_status pa_review_serve(pa_review* review);
PA_API void pa_review_stop(pa_review* review);
PA_API void pa_review_free(pa_review* review);

#ifdef __cplusplus
}
#endif

#endif /* PREFAUDIT_PREFAUDIT_H_ */
