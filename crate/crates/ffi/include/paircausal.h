#ifndef PAIRCAUSAL_H
#define PAIRCAUSAL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PcStatus {
  PC_STATUS_OK = 0,
  PC_STATUS_NULL_POINTER = 1,
  PC_STATUS_INVALID_INPUT = 2,
  PC_STATUS_PRECONDITION = 3,
  PC_STATUS_RANK_DEFICIENT = 4,
  PC_STATUS_METHOD_MISMATCH = 5,
  PC_STATUS_CONFIG = 6,
  PC_STATUS_IO = 7,
  PC_STATUS_ENUMERATION_TOO_LARGE = 8,
  PC_STATUS_OUT_OF_RANGE = 9,
  PC_STATUS_PANIC = 10,
} PcStatus;

typedef enum PcEstimand {
  PC_ESTIMAND_LAMBDA10 = 0,
  PC_ESTIMAND_LAMBDA01 = 1,
  PC_ESTIMAND_TAU = 2,
} PcEstimand;

typedef enum PcMethod {
  PC_METHOD_HR = 0,
  PC_METHOD_CR = 1,
  PC_METHOD_TW = 2,
  PC_METHOD_CTW = 3,
} PcMethod;

/**
 * Opaque observed dataset.
 */
typedef struct PcDataset PcDataset;

/**
 * Opaque estimate table.
 */
typedef struct PcResult PcResult;

/**
 * One line of an estimate table. The estimator name is available from
 * [`pc_result_estimator`].
 */
typedef struct PcEstimateRow {
  enum PcEstimand estimand;
  enum PcMethod method;
  double estimate;
  double se;
  double ci_lo;
  double ci_hi;
} PcEstimateRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a dataset from row-major buffers: `treatment[n]` with values 0/1,
 * `outcomes[n*q]` and `covariates[n*d]` (may be null when `d == 0`).
 *
 * # Safety
 * The buffers must hold at least the stated number of elements and `out`
 * must be a valid pointer to writable storage for one handle.
 */
enum PcStatus pc_dataset_new(size_t n,
                             const uint8_t *treatment,
                             const double *outcomes,
                             size_t q,
                             const double *covariates,
                             size_t d,
                             struct PcDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle from [`pc_dataset_new`] not yet freed.
 */
void pc_dataset_free(struct PcDataset *ds);

/**
 * Runs the estimators in `config_json`, an analysis configuration such as
 * `{"contrast": {"kind": "win_strict"}, "estimators": ["I-un"], "methods": ["CTW"]}`.
 * Column selection fields are ignored.
 *
 * # Safety
 * `ds` must be a live dataset handle, `config_json` a NUL-terminated UTF-8
 * string and `out` writable storage for one handle.
 */
enum PcStatus pc_estimate(const struct PcDataset *ds,
                          const char *config_json,
                          struct PcResult **out);

/**
 * Number of rows; 0 for a null handle.
 *
 * # Safety
 * `res` must be null or a live result handle.
 */
size_t pc_result_len(const struct PcResult *res);

/**
 * Copies row `index` into `out`.
 *
 * # Safety
 * `res` must be a live result handle and `out` writable storage for one row.
 */
enum PcStatus pc_result_row(const struct PcResult *res, size_t index, struct PcEstimateRow *out);

/**
 * Estimator name of row `index`, or null when out of range. The string is
 * owned by the result and lives until [`pc_result_free`].
 *
 * # Safety
 * `res` must be null or a live result handle.
 */
const char *pc_result_estimator(const struct PcResult *res, size_t index);

/**
 * The whole table as a JSON array, owned by the result.
 *
 * # Safety
 * `res` must be null or a live result handle.
 */
const char *pc_result_json(const struct PcResult *res);

/**
 * # Safety
 * `res` must be null or a handle from [`pc_estimate`] not yet freed.
 */
void pc_result_free(struct PcResult *res);

/**
 * Message of the last failed call on this thread, or null after a success.
 * Valid until the next call into the library on this thread.
 */
const char *pc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PAIRCAUSAL_H */
