#ifndef BRIDGEREC_H
#define BRIDGEREC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum BrStatus {
  BR_STATUS_OK = 0,
  BR_STATUS_NULL_POINTER = 1,
  BR_STATUS_INVALID_ARGUMENT = 2,
  BR_STATUS_IO = 3,
  BR_STATUS_PARSE = 4,
  BR_STATUS_SHAPE = 5,
  BR_STATUS_NO_SUPERVISION = 6,
  BR_STATUS_CONFIG = 7,
  BR_STATUS_NUMERIC = 8,
  BR_STATUS_MISSING_ARTIFACT = 9,
  BR_STATUS_PANIC = 10,
} BrStatus;

/**
 * Input file layout for [`br_dataset_load`].
 */
typedef enum BrFormat {
  /**
   * Chosen from the file extension.
   */
  BR_FORMAT_AUTO = 0,
  BR_FORMAT_CSV = 1,
  BR_FORMAT_JSON_LINES = 2,
} BrFormat;

/**
 * Methods accepted by [`br_experiment_run`].
 */
typedef enum BrMethod {
  BR_METHOD_TGT = 0,
  BR_METHOD_CMF = 1,
  BR_METHOD_EMCDR = 2,
  BR_METHOD_PTUPCDR = 3,
  BR_METHOD_PTUPCDR_MAPPING_ABLATION = 4,
} BrMethod;

/**
 * A loaded rating log.
 */
typedef struct BrDataset BrDataset;

/**
 * Data, split and pre-trained models of one run.
 */
typedef struct BrExperiment BrExperiment;

/**
 * Trained encoder and meta network.
 */
typedef struct BrMetaBridge BrMetaBridge;

/**
 * A pre-trained per-domain model.
 */
typedef struct BrModel BrModel;

typedef struct BrMetrics {
  double mae;
  double rmse;
  size_t n_eval;
  size_t skipped_users;
} BrMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the calling thread's most recent failure, or null. The pointer
 * stays valid until the next failing call on this thread.
 */
const char *br_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *br_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void br_string_free(char *s);

/**
 * Loads a rating log.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum BrStatus br_dataset_load(const char *path, enum BrFormat format, struct BrDataset **out);

/**
 * # Safety
 * `ds` must come from [`br_dataset_load`] and not have been freed.
 */
void br_dataset_free(struct BrDataset *ds);

/**
 * Writes user, item and rating counts. Any out-pointer may be null.
 *
 * # Safety
 * `ds` must be a live dataset handle.
 */
enum BrStatus br_dataset_counts(const struct BrDataset *ds,
                                size_t *n_users,
                                size_t *n_items,
                                size_t *n_ratings);

/**
 * Number of users present in both datasets.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum BrStatus br_overlap_count(const struct BrDataset *src,
                               const struct BrDataset *tgt,
                               size_t *out);

/**
 * Splits the overlapping users and returns the plan as JSON. Free the
 * string with [`br_string_free`].
 *
 * # Safety
 * Both handles must be live; `out_json` must be writable.
 */
enum BrStatus br_make_split_json(const struct BrDataset *src,
                                 const struct BrDataset *tgt,
                                 double beta,
                                 uint64_t seed,
                                 char **out_json);

/**
 * Loads data, splits it and pre-trains both domains as described by a run
 * configuration in JSON. Relative paths resolve against the working
 * directory, and `stage` / `checkpoint_dir` are honoured.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
enum BrStatus br_experiment_prepare(const char *config_json, struct BrExperiment **out);

/**
 * # Safety
 * `exp` must come from [`br_experiment_prepare`] and not have been freed.
 */
void br_experiment_free(struct BrExperiment *exp);

/**
 * Runs one method's cold and warm stages. Either out-pointer may be null.
 * When `out_meta` is non-null and the method trains a personalized bridge,
 * a new bridge handle is written there (null otherwise).
 *
 * # Safety
 * `exp` must be a live handle; non-null out-pointers must be writable.
 */
enum BrStatus br_experiment_run(const struct BrExperiment *exp,
                                enum BrMethod m,
                                struct BrMetrics *cold,
                                struct BrMetrics *warm,
                                struct BrMetaBridge **out_meta);

/**
 * The experiment's split plan as JSON.
 *
 * # Safety
 * `exp` must be a live handle; `out_json` must be writable.
 */
enum BrStatus br_experiment_split_json(const struct BrExperiment *exp, char **out_json);

/**
 * Copies the pre-trained target model into a new handle.
 *
 * # Safety
 * `exp` must be a live handle; `out` must be writable.
 */
enum BrStatus br_experiment_target_model(const struct BrExperiment *exp, struct BrModel **out);

/**
 * Loads a model checkpoint manifest.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum BrStatus br_model_load(const char *path, struct BrModel **out);

/**
 * Writes a model checkpoint manifest and its `.bin` payload.
 *
 * # Safety
 * `model` must be a live handle; `path` a NUL-terminated string.
 */
enum BrStatus br_model_save(const struct BrModel *model, const char *path);

/**
 * # Safety
 * `model` must come from this library and not have been freed.
 */
void br_model_free(struct BrModel *model);

/**
 * Embedding dimension, user count and item count. Any out-pointer may be
 * null.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum BrStatus br_model_shape(const struct BrModel *model,
                             size_t *dim,
                             size_t *n_users,
                             size_t *n_items);

/**
 * Predicted rating of a user-item pair (unclipped).
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum BrStatus br_model_score(const struct BrModel *model, size_t user, size_t item, double *out);

/**
 * Score of an arbitrary user representation (`dim` values) against an
 * item.
 *
 * # Safety
 * `user_rep` must point to `dim` readable doubles; `out` must be writable.
 */
enum BrStatus br_model_score_representation(const struct BrModel *model,
                                            const double *user_rep,
                                            size_t dim,
                                            size_t item,
                                            double *out);

/**
 * Loads a meta bridge checkpoint manifest.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum BrStatus br_meta_bridge_load(const char *path, struct BrMetaBridge **out);

/**
 * Writes a meta bridge checkpoint manifest and its `.bin` payload.
 *
 * # Safety
 * `bridge` must be a live handle; `path` a NUL-terminated string.
 */
enum BrStatus br_meta_bridge_save(const struct BrMetaBridge *bridge, const char *path);

/**
 * # Safety
 * `bridge` must come from this library and not have been freed.
 */
void br_meta_bridge_free(struct BrMetaBridge *bridge);

/**
 * Embedding dimension of the bridge.
 *
 * # Safety
 * `bridge` must be a live handle; `out` must be writable.
 */
enum BrStatus br_meta_bridge_dim(const struct BrMetaBridge *bridge, size_t *out);

/**
 * Maps a source representation into the target domain through the bridge
 * generated from the user's history.
 *
 * `src_rep` and `out` hold `dim` doubles; `history` holds `n_items` item
 * embeddings of `dim` doubles each, oldest first, row-major.
 *
 * # Safety
 * All buffers must be valid for the stated lengths.
 */
enum BrStatus br_meta_bridge_transform(const struct BrMetaBridge *bridge,
                                       const double *src_rep,
                                       const double *history,
                                       size_t n_items,
                                       size_t dim,
                                       double *out);

/**
 * MAE and RMSE of `n` (rating, prediction) pairs.
 *
 * # Safety
 * `ratings` and `predictions` must hold `n` doubles; `out` must be writable.
 */
enum BrStatus br_compute_metrics(const double *ratings,
                                 const double *predictions,
                                 size_t n,
                                 struct BrMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BRIDGEREC_H */
