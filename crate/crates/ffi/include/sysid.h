#ifndef SYSID_H
#define SYSID_H

/* Generated by cbindgen from crates/ffi/src. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every function.
 */
typedef enum SysidStatus {
  SYSID_STATUS_OK = 0,
  SYSID_STATUS_NULL_POINTER = 1,
  SYSID_STATUS_INVALID_ARGUMENT = 2,
  SYSID_STATUS_DIMENSION_MISMATCH = 3,
  SYSID_STATUS_NOT_POSITIVE_DEFINITE = 4,
  SYSID_STATUS_SINGULAR = 5,
  SYSID_STATUS_DESCENT_VIOLATION = 6,
  SYSID_STATUS_PARSE = 7,
  SYSID_STATUS_PANIC = 8,
} SysidStatus;

/**
 * Control and observation record on the grid of a spec.
 */
typedef struct SysidDataset SysidDataset;

/**
 * Result of [`sysid_fit`].
 */
typedef struct SysidReport SysidReport;

/**
 * Validated model and time grid.
 */
typedef struct SysidSpec SysidSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call on the same thread.
 */
const char *sysid_last_error_message(void);

/**
 * Parse and validate a JSON spec document (`N, d, m, p, C, G, Q, R, Pi0,
 * x0, A0, B0, alpha, beta, T, M`).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum SysidStatus sysid_spec_from_json(const char *json, struct SysidSpec **out);

/**
 * # Safety
 * `spec` must come from [`sysid_spec_from_json`] or be null.
 */
void sysid_spec_free(struct SysidSpec *spec);

/**
 * Dimensions `(N, d, m, p)` and interval count `M` of a spec.
 * Any output pointer may be null.
 *
 * # Safety
 * `spec` must be a live handle.
 */
enum SysidStatus sysid_spec_dims(const struct SysidSpec *spec,
                                 size_t *n,
                                 size_t *d,
                                 size_t *m,
                                 size_t *p,
                                 size_t *intervals);

/**
 * Build a dataset from row-major `v` (`M x d`) and `y` (`M x p`).
 *
 * # Safety
 * `v` and `y` must point to `v_len` and `y_len` readable doubles.
 */
enum SysidStatus sysid_dataset_new(const struct SysidSpec *spec,
                                   const double *v,
                                   size_t v_len,
                                   const double *y,
                                   size_t y_len,
                                   struct SysidDataset **out);

/**
 * Simulate a record under `(A_true, B_true)` (row-major) with a generated
 * control. `control_kind` is `zero`, `step`, `sine` or `multisine`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `control_kind` must be
 * NUL-terminated.
 */
enum SysidStatus sysid_simulate(const struct SysidSpec *spec,
                                const double *a_true,
                                size_t a_len,
                                const double *b_true,
                                size_t b_len,
                                const char *control_kind,
                                const double *params,
                                size_t params_len,
                                uint64_t seed,
                                double noise_scale,
                                struct SysidDataset **out);

/**
 * # Safety
 * `dataset` must come from this library or be null.
 */
void sysid_dataset_free(struct SysidDataset *dataset);

/**
 * Copy the observations (`M x p`, row-major) into `out`.
 *
 * # Safety
 * `out` must have room for `len` doubles.
 */
enum SysidStatus sysid_dataset_copy_y(const struct SysidDataset *dataset, double *out, size_t len);

/**
 * Run the alternating fit. Non-positive `max_iters` or negative tolerances
 * fall back to the library defaults.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum SysidStatus sysid_fit(const struct SysidSpec *spec,
                           const struct SysidDataset *dataset,
                           int64_t max_iters,
                           double tol_step,
                           double tol_stat,
                           struct SysidReport **out);

/**
 * # Safety
 * `report` must come from [`sysid_fit`] or be null.
 */
void sysid_report_free(struct SysidReport *report);

/**
 * Sweep count, convergence flag and final objective value.
 * Any output pointer may be null.
 *
 * # Safety
 * `report` must be a live handle.
 */
enum SysidStatus sysid_report_summary(const struct SysidReport *report,
                                      size_t *iterations,
                                      bool *converged,
                                      double *final_j);

/**
 * Copy the estimated `A` (`N x N`, row-major).
 *
 * # Safety
 * `out` must have room for `len` doubles.
 */
enum SysidStatus sysid_report_copy_a(const struct SysidReport *report, double *out, size_t len);

/**
 * Copy the estimated `B` (`N x d`, row-major).
 *
 * # Safety
 * `out` must have room for `len` doubles.
 */
enum SysidStatus sysid_report_copy_b(const struct SysidReport *report, double *out, size_t len);

/**
 * Serialize the full report as JSON. Release the string with
 * [`sysid_string_free`].
 *
 * # Safety
 * `out` must be writable.
 */
enum SysidStatus sysid_report_to_json(const struct SysidReport *report, char **out);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void sysid_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SYSID_H */
