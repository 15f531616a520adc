#ifndef PLAN_HARVEST_H
#define PLAN_HARVEST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Sentence cap argument: use the dataset's default cap.
#define PH_CAP_DATASET_DEFAULT -1

// Sentence cap argument: keep every sentence.
#define PH_CAP_NONE 0

typedef enum PhStatus {
  PH_STATUS_OK = 0,
  PH_STATUS_NULL_POINTER = 1,
  PH_STATUS_INVALID_UTF8 = 2,
  PH_STATUS_INVALID_ARGUMENT = 3,
  PH_STATUS_IO = 4,
  PH_STATUS_CORPUS = 5,
  PH_STATUS_NOT_FOUND = 6,
  PH_STATUS_PROMPT = 7,
  PH_STATUS_PANIC = 8,
} PhStatus;

typedef struct PhCorpus PhCorpus;

typedef struct PhPlan PhPlan;

typedef struct PhStats {
  size_t labeled_texts;
  size_t total_words;
  double action_name_rate;
  double action_argument_rate;
} PhStats;

typedef struct PhScore {
  size_t name_total_right;
  size_t name_total_tagged;
  size_t name_total_truth;
  size_t arg_total_right;
  size_t arg_total_tagged;
  size_t arg_total_truth;
  double name_precision;
  double name_recall;
  double name_f1;
  double arg_precision;
  double arg_recall;
  double arg_f1;
} PhScore;

typedef struct PhOrder {
  size_t common_actions;
  size_t discordant_pairs;
  bool exact_order_match;
  // False when fewer than two actions matched; `kendall_tau` is then 0.
  bool has_tau;
  double kendall_tau;
} PhOrder;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a
// successful one. Valid until the next `ph_*` call on the same thread.
const char *ph_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ph_version(void);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void ph_string_free(char *s);

// Loads a JSONL corpus. An empty `dataset` accepts any dataset tag.
//
// # Safety
// `path` and `dataset` must be NUL-terminated strings; `out` must be writable.
enum PhStatus ph_corpus_load(const char *path, const char *dataset, struct PhCorpus **out);

// Parses JSONL corpus text held in memory.
//
// # Safety
// `jsonl` and `dataset` must be NUL-terminated strings; `out` must be writable.
enum PhStatus ph_corpus_parse(const char *jsonl, const char *dataset, struct PhCorpus **out);

// # Safety
// `corpus` must be null or a handle from `ph_corpus_load`/`ph_corpus_parse`.
void ph_corpus_free(struct PhCorpus *corpus);

// Number of texts, or 0 for a null handle.
//
// # Safety
// `corpus` must be null or a live corpus handle.
size_t ph_corpus_len(const struct PhCorpus *corpus);

// Copies the id of the text at `index` into a new string.
//
// # Safety
// `corpus` must be a live corpus handle; `out` must be writable.
enum PhStatus ph_corpus_text_id(const struct PhCorpus *corpus, size_t index, char **out);

// # Safety
// `corpus` must be a live corpus handle; `out` must be writable.
enum PhStatus ph_corpus_stats(const struct PhCorpus *corpus, struct PhStats *out);

// Parses plan notation from a completion. Never fails on malformed input;
// inspect `ph_plan_truncated` and `ph_plan_skipped_spans` instead.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum PhStatus ph_plan_parse(const char *text, struct PhPlan **out);

// # Safety
// `plan` must be null or a handle from `ph_plan_parse`.
void ph_plan_free(struct PhPlan *plan);

// # Safety
// `plan` must be null or a live plan handle.
size_t ph_plan_len(const struct PhPlan *plan);

// # Safety
// `plan` must be null or a live plan handle.
bool ph_plan_truncated(const struct PhPlan *plan);

// Number of skipped (unparseable) spans.
//
// # Safety
// `plan` must be null or a live plan handle.
size_t ph_plan_skipped_spans(const struct PhPlan *plan);

// Renders the plan in canonical notation.
//
// # Safety
// `plan` must be a live plan handle; `out` must be writable.
enum PhStatus ph_plan_render(const struct PhPlan *plan, char **out);

// Builds the leave-one-out prompt for `test_id`. `sentence_cap` is a
// positive cap, `PH_CAP_NONE` or `PH_CAP_DATASET_DEFAULT`.
// `out_token_estimate` may be null.
//
// # Safety
// `corpus` must be a live corpus handle, `test_id` a NUL-terminated string
// and `out_prompt` writable.
enum PhStatus ph_prompt_render(const struct PhCorpus *corpus,
                               const char *test_id,
                               size_t shots,
                               uint64_t seed,
                               int32_t sentence_cap,
                               char **out_prompt,
                               size_t *out_token_estimate);

// Scores `plan` against the gold plan of `test_id`.
//
// # Safety
// `corpus` and `plan` must be live handles, `test_id` a NUL-terminated
// string and `out` writable.
enum PhStatus ph_score_text(const struct PhCorpus *corpus,
                            const char *test_id,
                            const struct PhPlan *plan,
                            bool optional_lenient,
                            struct PhScore *out);

// Order agreement between the gold plan of `test_id` and `plan`.
//
// # Safety
// Same requirements as `ph_score_text`.
enum PhStatus ph_order_agreement(const struct PhCorpus *corpus,
                                 const char *test_id,
                                 const struct PhPlan *plan,
                                 struct PhOrder *out);

// Prompt token estimate (one token per four characters, rounded up).
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum PhStatus ph_estimate_tokens(const char *text, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLAN_HARVEST_H */
