#ifndef SRAS_H
#define SRAS_H

/* Generated with cbindgen:0.27.0 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum SrasStatus {
  SRAS_STATUS_OK = 0,
  SRAS_STATUS_NULL_POINTER = 1,
  SRAS_STATUS_INVALID_ARGUMENT = 2,
  SRAS_STATUS_SHAPE = 3,
  SRAS_STATUS_FORMAT = 4,
  SRAS_STATUS_DATA = 5,
  SRAS_STATUS_IO = 6,
  SRAS_STATUS_CONFIG = 7,
  SRAS_STATUS_TRAINING = 8,
  SRAS_STATUS_REWARD = 9,
  SRAS_STATUS_INVALID_UTF8 = 10,
  SRAS_STATUS_PANIC = 11,
} SrasStatus;

/**
 * Opaque scorer parameters.
 */
typedef struct SrasModel SrasModel;

/**
 * Opaque embedding store.
 */
typedef struct SrasStore SrasStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *sras_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sras_version(void);

/**
 * Loads a model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SrasStatus sras_model_load(const char *path, struct SrasModel **out);

/**
 * Fresh seeded parameters with embedding size `d` and hidden size `h`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SrasStatus sras_model_new_random(size_t d, size_t h, uint64_t seed, struct SrasModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void sras_model_free(struct SrasModel *model);

/**
 * # Safety
 * All pointers must be valid.
 */
enum SrasStatus sras_model_dims(const struct SrasModel *model, size_t *d, size_t *h);

/**
 * # Safety
 * All pointers must be valid.
 */
enum SrasStatus sras_model_param_count(const struct SrasModel *model, size_t *count);

/**
 * Writes the model file atomically.
 *
 * # Safety
 * `model` must be valid and `path` NUL-terminated.
 */
enum SrasStatus sras_model_save(const struct SrasModel *model, const char *path);

/**
 * Scores `n` candidates (`docs`, row-major `n × d`) for `query` (length
 * `d`) into `scores` (length `n`).
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum SrasStatus sras_model_score(const struct SrasModel *model,
                                 const float *query,
                                 const float *docs,
                                 size_t d,
                                 size_t n,
                                 float *scores);

/**
 * Indices of the `k` highest-scoring candidates, best first, ties to the
 * lower index.
 *
 * # Safety
 * Buffers must hold the stated number of elements; `indices` holds `k`.
 */
enum SrasStatus sras_model_select_topk(const struct SrasModel *model,
                                       const float *query,
                                       const float *docs,
                                       size_t d,
                                       size_t n,
                                       size_t k,
                                       size_t *indices);

/**
 * Top-k candidates by cosine similarity to `query`.
 *
 * # Safety
 * Buffers must hold the stated number of elements; `indices` holds `k`.
 */
enum SrasStatus sras_cosine_topk(const float *query,
                                 const float *docs,
                                 size_t d,
                                 size_t n,
                                 size_t k,
                                 size_t *indices);

/**
 * Loads an embedding store file.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
enum SrasStatus sras_store_load(const char *path, struct SrasStore **out);

/**
 * Releases a store. Null is ignored.
 *
 * # Safety
 * `store` must come from this library and not be used afterwards.
 */
void sras_store_free(struct SrasStore *store);

/**
 * # Safety
 * All pointers must be valid.
 */
enum SrasStatus sras_store_info(const struct SrasStore *store, size_t *count, size_t *dim);

/**
 * Copies the vector stored under `id` into `out` (length `dim`).
 *
 * # Safety
 * `id` must be NUL-terminated and `out` hold `dim` floats.
 */
enum SrasStatus sras_store_get(const struct SrasStore *store,
                               const char *id,
                               float *out,
                               size_t dim);

/**
 * Selects `k` of the `n` documents named by `candidate_ids` for the query
 * stored under `query_id`, writing candidate positions to `indices`.
 *
 * # Safety
 * `candidate_ids` holds `n` NUL-terminated strings; `indices` holds `k`.
 */
enum SrasStatus sras_model_select_ids(const struct SrasModel *model,
                                      const struct SrasStore *store,
                                      const char *query_id,
                                      const char *const *candidate_ids,
                                      size_t n,
                                      size_t k,
                                      size_t *indices);

/**
 * Token-level F1 after answer normalization with the default stopwords.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` valid.
 */
enum SrasStatus sras_relaxed_f1(const char *prediction, const char *reference, double *out);

/**
 * `alpha · f1 + (1 - alpha) · semantic`.
 *
 * # Safety
 * `out` must be valid.
 */
enum SrasStatus sras_hybrid_reward(double f1, double semantic, double alpha, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SRAS_H */
