#ifndef CONDENSED_IPM_H
#define CONDENSED_IPM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CipmErrorCode {
  CIPM_ERROR_CODE_OK = 0,
  CIPM_ERROR_CODE_NULL_POINTER = 1,
  CIPM_ERROR_CODE_INVALID_ARGUMENT = 2,
  CIPM_ERROR_CODE_BUILD = 3,
  CIPM_ERROR_CODE_BUFFER_TOO_SMALL = 4,
  CIPM_ERROR_CODE_SERIALIZE = 5,
  CIPM_ERROR_CODE_PANIC = 6,
} CipmErrorCode;

typedef enum CipmStrategy {
  CIPM_STRATEGY_AUGMENTED = 0,
  CIPM_STRATEGY_LIFTED = 1,
  CIPM_STRATEGY_HYKKT = 2,
} CipmStrategy;

typedef enum CipmSolveStatus {
  CIPM_SOLVE_STATUS_OPTIMAL = 0,
  CIPM_SOLVE_STATUS_MAX_ITER = 1,
  CIPM_SOLVE_STATUS_RESTORATION_FAILURE = 2,
  CIPM_SOLVE_STATUS_STRATEGY_FAILURE = 3,
  CIPM_SOLVE_STATUS_EVALUATION_FAILURE = 4,
} CipmSolveStatus;

/**
 * Opaque compiled model.
 */
typedef struct CipmModel CipmModel;

/**
 * Opaque solve report.
 */
typedef struct CipmReport CipmReport;

/**
 * Solver settings; obtain defaults from [`cipm_options_default`].
 */
typedef struct CipmOptions {
  double tol;
  size_t max_iter;
  enum CipmStrategy strategy;
  double tau_relax;
  double gamma;
} CipmOptions;

typedef struct CipmTimers {
  double init_s;
  double ad_s;
  double linsolve_s;
  double total_s;
} CipmTimers;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *cipm_last_error(void);

/**
 * Writes the default solver settings into `out`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `CipmOptions`.
 */
enum CipmErrorCode cipm_options_default(struct CipmOptions *out);

/**
 * Builds the distillation instance with `n_steps` intervals. `params_toml`
 * may be null (defaults) or a TOML document overriding parameters.
 *
 * # Safety
 * `params_toml` must be null or a NUL-terminated string; `out` must point
 * to writable storage for one pointer.
 */
enum CipmErrorCode cipm_distillation_new(size_t n_steps,
                                         const char *params_toml,
                                         struct CipmModel **out);

/**
 * Number of variables, equality rows and inequality rows.
 *
 * # Safety
 * `model` must come from [`cipm_distillation_new`]; the outputs must be
 * null or writable.
 */
enum CipmErrorCode cipm_model_dimensions(const struct CipmModel *model,
                                         size_t *n,
                                         size_t *m_e,
                                         size_t *m_i);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must be null or come from [`cipm_distillation_new`] and not have
 * been freed.
 */
void cipm_model_free(struct CipmModel *model);

/**
 * Solves the model. A report is produced for every termination status;
 * the error code only signals invalid arguments.
 *
 * # Safety
 * `model` must be a live model handle, `options` null (defaults) or a
 * valid pointer, `out` writable storage for one pointer.
 */
enum CipmErrorCode cipm_solve(const struct CipmModel *model,
                              const struct CipmOptions *options,
                              struct CipmReport **out);

/**
 * # Safety
 * `r` must be a live report handle and `out` writable.
 */
enum CipmErrorCode cipm_report_status(const struct CipmReport *r, enum CipmSolveStatus *out);

/**
 * # Safety
 * `r` must be a live report handle and `out` writable.
 */
enum CipmErrorCode cipm_report_iterations(const struct CipmReport *r, size_t *out);

/**
 * # Safety
 * `r` must be a live report handle and `out` writable.
 */
enum CipmErrorCode cipm_report_objective(const struct CipmReport *r, double *out);

/**
 * Final unscaled KKT residual.
 *
 * # Safety
 * `r` must be a live report handle and `out` writable.
 */
enum CipmErrorCode cipm_report_residual(const struct CipmReport *r, double *out);

/**
 * # Safety
 * `r` must be a live report handle and `out` writable.
 */
enum CipmErrorCode cipm_report_timers(const struct CipmReport *r, struct CipmTimers *out);

/**
 * Copies the final primal point into `x`, which must hold at least `len`
 * values; `len` must be at least the number of variables.
 *
 * # Safety
 * `r` must be a live report handle and `x` valid for `len` writes.
 */
enum CipmErrorCode cipm_report_solution(const struct CipmReport *r, double *x, size_t len);

/**
 * Serializes the report as JSON. Release the string with
 * [`cipm_string_free`].
 *
 * # Safety
 * `r` must be a live report handle and `out` writable.
 */
enum CipmErrorCode cipm_report_to_json(const struct CipmReport *r, char **out);

/**
 * Releases a report; null is ignored.
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
void cipm_report_free(struct CipmReport *r);

/**
 * Releases a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must be null or a string from [`cipm_report_to_json`].
 */
void cipm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONDENSED_IPM_H */
