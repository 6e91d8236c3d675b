#ifndef LEANING_H
#define LEANING_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define LEANING_N_PARTIES 5

#define LEANING_N_TOPICS 4

/**
 * Label value for a user whose top like counts tie.
 */
#define LEANING_LABEL_INCONCLUSIVE -1

/**
 * Label value for a user below the like threshold.
 */
#define LEANING_LABEL_EXCLUDED -2

typedef enum LeaningStatus {
  LEANING_STATUS_OK = 0,
  LEANING_STATUS_NULL_POINTER = 1,
  LEANING_STATUS_INVALID_UTF8 = 2,
  LEANING_STATUS_INVALID_ARGUMENT = 3,
  LEANING_STATUS_IO = 4,
  LEANING_STATUS_MODEL = 5,
  LEANING_STATUS_COMPUTATION = 6,
  LEANING_STATUS_PANIC = 7,
} LeaningStatus;

/**
 * Opaque classifier handle.
 */
typedef struct LeaningModel LeaningModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *leaning_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *leaning_version(void);

/**
 * Static name of party `index`, or null when out of range.
 */
const char *leaning_party_name(int32_t index);

/**
 * Loads a model file. On success `*out` owns a handle that must be
 * released with `leaning_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum LeaningStatus leaning_model_load(const char *path, struct LeaningModel **out);

/**
 * Releases a handle from `leaning_model_load`. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void leaning_model_free(struct LeaningModel *model);

/**
 * Number of features in the model vocabulary.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum LeaningStatus leaning_model_dim(const struct LeaningModel *model, size_t *out);

/**
 * Classifies one text. Writes the party index to `*label` and, when
 * `scores` is non-null, the five softmax scores in party order.
 *
 * # Safety
 * `model` must be a live handle, `text` NUL-terminated, `label` writable
 * and `scores` null or writable for `LEANING_N_PARTIES` doubles.
 */
enum LeaningStatus leaning_model_predict(const struct LeaningModel *model,
                                         const char *text,
                                         int32_t *label,
                                         double *scores);

/**
 * Applies the like-tally rules to one user. `tally` holds five counts in
 * party order. `*label` receives a party index,
 * `LEANING_LABEL_INCONCLUSIVE` or `LEANING_LABEL_EXCLUDED`.
 *
 * # Safety
 * `tally` must be readable for `LEANING_N_PARTIES` values and `label`
 * writable.
 */
enum LeaningStatus leaning_assign_label(const uint32_t *tally,
                                        uint32_t min_likes,
                                        bool ambiguous_mode,
                                        int32_t *label);

/**
 * Nominal Krippendorff's alpha over `n` annotations given as parallel
 * arrays of item ids, annotator ids and party indices.
 *
 * # Safety
 * The three arrays must be readable for `n` elements and `out` writable.
 */
enum LeaningStatus leaning_krippendorff_alpha(const uint32_t *items,
                                              const uint32_t *annotators,
                                              const int32_t *labels,
                                              size_t n,
                                              double *out);

/**
 * Matches the default topic keywords. Bit `i` of `*mask` is set when
 * topic `i` matches (abortion = 0, eu_cjeu = 1, lextvn = 2,
 * polish_order = 3).
 *
 * # Safety
 * `text` must be NUL-terminated and `mask` writable.
 */
enum LeaningStatus leaning_match_topics(const char *text, uint32_t *mask);

/**
 * Words that are not hashtags, mentions or URLs.
 *
 * # Safety
 * `text` must be NUL-terminated and `out` writable.
 */
enum LeaningStatus leaning_count_plain_words(const char *text, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEANING_H */
