#ifndef MOSAIC_H
#define MOSAIC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MosaicStatus {
  MOSAIC_STATUS_OK = 0,
  MOSAIC_STATUS_NULL_POINTER = 1,
  MOSAIC_STATUS_INVALID_UTF8 = 2,
  MOSAIC_STATUS_INVALID_ARGUMENT = 3,
  MOSAIC_STATUS_LOAD_FAILED = 4,
  MOSAIC_STATUS_ENGINE_FAILED = 5,
  MOSAIC_STATUS_OUT_OF_RANGE = 6,
  MOSAIC_STATUS_PANIC = 7,
} MosaicStatus;

// A collection with one or two registered similarity matrices.
typedef struct MosaicEngine MosaicEngine;

// One ranked recommendation set.
typedef struct MosaicRecommendation MosaicRecommendation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until
// the next call into this library from the same thread.
const char *mosaic_last_error_message(void);

// Loads a manifest and matrix A (and optionally matrix B; pass NULL to
// skip). On success `*out` owns a new engine.
enum MosaicStatus mosaic_engine_open(const char *manifest_path,
                                     const char *matrix_a_path,
                                     const char *matrix_b_path,
                                     struct MosaicEngine **out);

void mosaic_engine_free(struct MosaicEngine *engine);

// Number of paintings in the engine's collection; 0 for NULL.
size_t mosaic_engine_len(const struct MosaicEngine *engine);

// Runs `engine_id` (e.g. "mosaic-a") for a profile given as JSON
// `{"ratings": {id: 1..5}, "beta": b, "xi": x}`. `r = 0` means 9.
// `*out_json` receives a string to release with [`mosaic_string_free`].
enum MosaicStatus mosaic_engine_recommend_json(const struct MosaicEngine *engine,
                                               const char *engine_id,
                                               const char *profile_json,
                                               size_t r,
                                               char **out_json);

// Same as [`mosaic_engine_recommend_json`] but returns a handle with
// accessor functions.
enum MosaicStatus mosaic_engine_recommend(const struct MosaicEngine *engine,
                                          const char *engine_id,
                                          const char *profile_json,
                                          size_t r,
                                          struct MosaicRecommendation **out);

size_t mosaic_recommendation_len(const struct MosaicRecommendation *rec);

// Id of the item at `index`, or NULL if out of range. Owned by `rec`.
const char *mosaic_recommendation_item_id(const struct MosaicRecommendation *rec, size_t index);

// Score of the item at `index`, or NaN if out of range.
double mosaic_recommendation_item_score(const struct MosaicRecommendation *rec, size_t index);

double mosaic_recommendation_objective(const struct MosaicRecommendation *rec);

// Whether the solver proved the set optimal.
bool mosaic_recommendation_optimal(const struct MosaicRecommendation *rec);

void mosaic_recommendation_free(struct MosaicRecommendation *rec);

void mosaic_string_free(char *s);

// Group coverage reward of a set of painting ids under the engine's
// story groups and weights.
enum MosaicStatus mosaic_engine_psi(const struct MosaicEngine *engine,
                                    const char *const *ids,
                                    size_t n,
                                    double *out);

// Intersection over union of two id lists.
enum MosaicStatus mosaic_jaccard(const char *const *a,
                                 size_t na,
                                 const char *const *b,
                                 size_t nb,
                                 double *out);

// Rank-biased overlap of two equal-length rankings with persistence `p`.
enum MosaicStatus mosaic_rbo(const char *const *a,
                             const char *const *b,
                             size_t n,
                             double p,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOSAIC_H */
