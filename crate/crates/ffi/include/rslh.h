#ifndef RSLH_H
#define RSLH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `RSLH_STATUS_OK` is zero.
 */
typedef enum RslhStatus {
  RSLH_STATUS_OK = 0,
  RSLH_STATUS_NULL_POINTER = 1,
  RSLH_STATUS_INVALID_ARGUMENT = 2,
  RSLH_STATUS_IO = 3,
  RSLH_STATUS_FORMAT = 4,
  RSLH_STATUS_NUMERICAL = 5,
  RSLH_STATUS_PANIC = 6,
} RslhStatus;

/**
 * Opaque model handle.
 */
typedef struct RslhModel RslhModel;

/**
 * Training hyperparameters. A `sigma` of zero or less means the bandwidth
 * is estimated from the data.
 */
typedef struct RslhHyperparams {
  double alpha;
  double beta;
  double gamma;
  double mu;
  double lambda;
  uint32_t code_length;
  uint32_t max_iters;
  double rel_tol;
  uint32_t anchors;
  double sigma;
} RslhHyperparams;

typedef struct RslhEvalReport {
  double map;
  double map_at_h2;
  double precision_at_k;
  size_t k;
  size_t n_queries;
  size_t n_database;
  size_t code_length;
} RslhEvalReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default hyperparameters with an 8-bit code and 1000 anchors.
 */
struct RslhHyperparams rslh_hyperparams_default(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rslh_version(void);

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next `rslh_*` call on the same thread.
 */
const char *rslh_last_error_message(void);

/**
 * Trains a plain model. `labels` holds `n` class indices.
 *
 * # Safety
 * Buffers must be valid for the given sizes; `out` must be writable.
 */
enum RslhStatus rslh_model_train(const double *features,
                                 size_t n,
                                 size_t dim,
                                 const uint32_t *labels,
                                 const struct RslhHyperparams *hyper,
                                 uint64_t seed,
                                 struct RslhModel **out);

/**
 * Trains `runs` models with seeds `seed, seed + 1, ...` and keeps a
 * balanced, uncorrelated subset of their bits.
 *
 * # Safety
 * As for [`rslh_model_train`].
 */
enum RslhStatus rslh_model_boost(const double *features,
                                 size_t n,
                                 size_t dim,
                                 const uint32_t *labels,
                                 const struct RslhHyperparams *hyper,
                                 uint32_t runs,
                                 uint64_t seed,
                                 struct RslhModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RslhStatus rslh_model_load(const char *path, struct RslhModel **out);

/**
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum RslhStatus rslh_model_save(const struct RslhModel *model, const char *path);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void rslh_model_free(struct RslhModel *model);

/**
 * Code length L, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or come from this library.
 */
size_t rslh_model_code_length(const struct RslhModel *model);

/**
 * Expected feature dimension, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or come from this library.
 */
size_t rslh_model_feature_dim(const struct RslhModel *model);

/**
 * 1 for boosted models, 0 for plain models or NULL.
 *
 * # Safety
 * `model` must be NULL or come from this library.
 */
int32_t rslh_model_is_boosted(const struct RslhModel *model);

/**
 * Writes `n * L` signs (+1 / -1), sample-major, to `out`.
 *
 * # Safety
 * `features` must hold `n * dim` doubles and `out` room for `n * L` bytes.
 */
enum RslhStatus rslh_model_encode(const struct RslhModel *model,
                                  const double *features,
                                  size_t n,
                                  size_t dim,
                                  int8_t *out,
                                  size_t out_len);

/**
 * Writes packed codes, `ceil(L / 8)` bytes per sample, to `out`.
 *
 * # Safety
 * `features` must hold `n * dim` doubles and `out` room for `out_len` bytes.
 */
enum RslhStatus rslh_model_encode_packed(const struct RslhModel *model,
                                         const double *features,
                                         size_t n,
                                         size_t dim,
                                         uint8_t *out,
                                         size_t out_len);

/**
 * Hamming distance between two packed codes of `code_length` bits.
 *
 * # Safety
 * `a` and `b` must each hold `ceil(code_length / 8)` bytes.
 */
enum RslhStatus rslh_hamming_distance(const uint8_t *a,
                                      const uint8_t *b,
                                      size_t code_length,
                                      uint32_t *out);

/**
 * Ranks the database for every query and fills `out` with mAP, mAP within
 * Hamming radius 2 and precision@`k`. Codes are `int8_t` signs,
 * sample-major.
 *
 * # Safety
 * Buffers must be valid for the given sizes; `out` must be writable.
 */
enum RslhStatus rslh_evaluate(const int8_t *query_codes,
                              size_t n_query,
                              const int8_t *db_codes,
                              size_t n_db,
                              size_t code_length,
                              const uint32_t *query_labels,
                              const uint32_t *db_labels,
                              size_t k,
                              struct RslhEvalReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSLH_H */
