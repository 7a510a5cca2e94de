#ifndef AUTOGRAPH_H
#define AUTOGRAPH_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AgStatus {
  AG_STATUS_OK = 0,
  AG_STATUS_NULL_POINTER = 1,
  AG_STATUS_INVALID_UTF8 = 2,
  AG_STATUS_LOAD = 3,
  AG_STATUS_FORMAT = 4,
  AG_STATUS_CONTRACT = 5,
  AG_STATUS_CAPACITY = 6,
  AG_STATUS_BUDGET = 7,
  AG_STATUS_USAGE = 8,
  AG_STATUS_SCORING = 9,
  AG_STATUS_IO = 10,
  AG_STATUS_OUT_OF_RANGE = 11,
  AG_STATUS_PANIC = 12,
} AgStatus;

/**
 * A loaded dataset.
 */
typedef struct AgDataset AgDataset;

/**
 * Predictions of one run, in test-id order.
 */
typedef struct AgPredictions AgPredictions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *ag_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ag_version(void);

/**
 * Loads a dataset directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AgStatus ag_dataset_load(const char *dir, struct AgDataset **out);

/**
 * Frees a dataset. NULL is ignored.
 *
 * # Safety
 * `ds` must come from [`ag_dataset_load`] and not be used afterwards.
 */
void ag_dataset_free(struct AgDataset *ds);

/**
 * Node, test-node and class counts of a dataset. Any output may be NULL.
 *
 * # Safety
 * `ds` must be a live dataset handle; non-NULL outputs must be valid.
 */
enum AgStatus ag_dataset_shape(const struct AgDataset *ds,
                               size_t *n_nodes,
                               size_t *n_test,
                               size_t *n_classes);

/**
 * Runs a named solution (`baseline_gcn2`, `gcn4`, `autograph`, `f2gcn`)
 * under a time budget in seconds. `max_trials` of 0 means no cap.
 *
 * # Safety
 * `ds` must be a live dataset handle, `solution` a NUL-terminated string
 * and `out` a valid pointer.
 */
enum AgStatus ag_run(const struct AgDataset *ds,
                     const char *solution,
                     double budget_seconds,
                     uint64_t seed,
                     size_t max_trials,
                     struct AgPredictions **out);

/**
 * Frees a prediction set. NULL is ignored.
 *
 * # Safety
 * `p` must come from [`ag_run`] and not be used afterwards.
 */
void ag_predictions_free(struct AgPredictions *p);

/**
 * Number of predicted nodes.
 *
 * # Safety
 * `p` must be a live prediction handle and `len` a valid pointer.
 */
enum AgStatus ag_predictions_len(const struct AgPredictions *p, size_t *len);

/**
 * Node id and predicted label of entry `index`.
 *
 * # Safety
 * `p` must be a live prediction handle; outputs must be valid pointers.
 */
enum AgStatus ag_predictions_get(const struct AgPredictions *p,
                                 size_t index,
                                 size_t *node_id,
                                 size_t *label);

/**
 * Whether the run fell back to majority-class predictions or overran
 * its budget.
 *
 * # Safety
 * `p` must be a live prediction handle and `out` a valid pointer.
 */
enum AgStatus ag_predictions_budget_exceeded(const struct AgPredictions *p, bool *out);

/**
 * Writes predictions.tsv and its sidecars into `dir`.
 *
 * # Safety
 * `p` must be a live prediction handle and `dir` a NUL-terminated string.
 */
enum AgStatus ag_predictions_write(const struct AgPredictions *p, const char *dir);

/**
 * Fraction of `n` predictions equal to the truth.
 *
 * # Safety
 * `pred` and `truth` must point to `n` values; `out` must be valid.
 */
enum AgStatus ag_accuracy(const size_t *pred, const size_t *truth, size_t n, double *out);

/**
 * Mean per-class recall over the classes present in `truth`.
 *
 * # Safety
 * `pred` and `truth` must point to `n` values; `out` must be valid.
 */
enum AgStatus ag_balanced_accuracy(const size_t *pred,
                                   const size_t *truth,
                                   size_t n,
                                   size_t n_classes,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AUTOGRAPH_H */
