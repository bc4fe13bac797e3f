#ifndef ROUGH_EM_H
#define ROUGH_EM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes shared by all functions.
 */
typedef enum RoughEmStatus {
  ROUGH_EM_STATUS_OK = 0,
  ROUGH_EM_STATUS_NULL_POINTER = 1,
  ROUGH_EM_STATUS_INVALID_ARGUMENT = 2,
  ROUGH_EM_STATUS_UNKNOWN_MODEL = 3,
  ROUGH_EM_STATUS_DOMAIN = 4,
  ROUGH_EM_STATUS_DIVERGENCE = 5,
  ROUGH_EM_STATUS_GRID_MISMATCH = 6,
  ROUGH_EM_STATUS_NON_POSITIVE_ERROR = 7,
  ROUGH_EM_STATUS_NON_CONTRACTION = 8,
  ROUGH_EM_STATUS_MISSING_METADATA = 9,
  ROUGH_EM_STATUS_VALIDATION = 10,
  ROUGH_EM_STATUS_CONFIG = 11,
  ROUGH_EM_STATUS_IO = 12,
  ROUGH_EM_STATUS_PANIC = 13,
} RoughEmStatus;

/**
 * Opaque catalog model.
 */
typedef struct RoughEmModel RoughEmModel;

/**
 * Opaque modulus of continuity.
 */
typedef struct RoughEmModulus RoughEmModulus;

/**
 * Opaque result of a strong-error study.
 */
typedef struct RoughEmRateReport RoughEmRateReport;

/**
 * Explicit constants of a bounded model.
 */
typedef struct RoughEmConstants {
  double lambda;
  double lambda_tilde;
  double upsilon;
  double lambda_min;
} RoughEmConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rough_em_version(void);

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t rough_em_last_error(char *buf, uintptr_t len);

/**
 * Build a catalog model. `params` holds `key = value` lines (or is null
 * for the defaults).
 *
 * # Safety
 * `name` and `params` must be null or valid C strings; `model` must be a
 * valid pointer to receive the handle.
 */
enum RoughEmStatus rough_em_model_new(const char *name,
                                      const char *params,
                                      struct RoughEmModel **model);

/**
 * # Safety
 * `model` must be null or a handle from [`rough_em_model_new`] not yet freed.
 */
void rough_em_model_free(struct RoughEmModel *model);

/**
 * Dimension of the model state (`2n` for degenerate models).
 *
 * # Safety
 * `model` must be a live handle and `dim` a valid pointer.
 */
enum RoughEmStatus rough_em_model_state_dim(const struct RoughEmModel *model, uintptr_t *dim);

/**
 * Constants of a bounded non-degenerate model.
 *
 * # Safety
 * `model` must be a live handle and `result` a valid pointer.
 */
enum RoughEmStatus rough_em_constants(const struct RoughEmModel *model,
                                      struct RoughEmConstants *result);

/**
 * `phi(r) = r^beta`.
 *
 * # Safety
 * `modulus` must be a valid pointer to receive the handle.
 */
enum RoughEmStatus rough_em_modulus_power(double beta, struct RoughEmModulus **modulus);

/**
 * `phi(r) = log(c + 1/r)^(-p)`, `phi(0) = 0`.
 *
 * # Safety
 * `modulus` must be a valid pointer to receive the handle.
 */
enum RoughEmStatus rough_em_modulus_log_power(double c, double p, struct RoughEmModulus **modulus);

/**
 * # Safety
 * `modulus` must be a live handle and `value` a valid pointer.
 */
enum RoughEmStatus rough_em_modulus_eval(const struct RoughEmModulus *modulus,
                                         double r,
                                         double *value);

/**
 * `∫_{lower_cut}^1 phi(s)/s ds`.
 *
 * # Safety
 * `modulus` must be a live handle and `value` a valid pointer.
 */
enum RoughEmStatus rough_em_modulus_dini_integral(const struct RoughEmModulus *modulus,
                                                  double lower_cut,
                                                  uintptr_t points,
                                                  double *value);

/**
 * # Safety
 * `modulus` must be null or a live handle.
 */
void rough_em_modulus_free(struct RoughEmModulus *modulus);

/**
 * Run a coupled strong-error study. `threads == 0` uses the default pool;
 * `exact_reference != 0` compares against the model's exact simulator.
 *
 * # Safety
 * `levels` must point to `n_levels` values, `x0` to `x0_len` values, and
 * `report` must be a valid pointer to receive the handle.
 */
enum RoughEmStatus rough_em_strong_error(const struct RoughEmModel *model,
                                         const uint32_t *levels,
                                         uintptr_t n_levels,
                                         uint32_t reference_level,
                                         uintptr_t n_paths,
                                         uint64_t seed,
                                         const double *x0,
                                         uintptr_t x0_len,
                                         int32_t exact_reference,
                                         uintptr_t threads,
                                         struct RoughEmRateReport **report);

/**
 * Number of levels in a report.
 *
 * # Safety
 * `report` must be a live handle and `len` a valid pointer.
 */
enum RoughEmStatus rough_em_report_len(const struct RoughEmRateReport *report, uintptr_t *len);

/**
 * Step size, mean squared sup error and its standard error of level `index`.
 *
 * # Safety
 * `report` must be a live handle; the output pointers must be valid.
 */
enum RoughEmStatus rough_em_report_level(const struct RoughEmRateReport *report,
                                         uintptr_t index,
                                         double *delta,
                                         double *error,
                                         double *stderr);

/**
 * Fitted log-log slope and R² of a report. Fails with
 * `NonPositiveError` when some level has zero error.
 *
 * # Safety
 * `report` must be a live handle; the output pointers must be valid.
 */
enum RoughEmStatus rough_em_report_fit(const struct RoughEmRateReport *report,
                                       double *slope,
                                       double *r_squared);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
void rough_em_report_free(struct RoughEmRateReport *report);

/**
 * Least-squares fit of `log errors` on `log deltas`.
 *
 * # Safety
 * `deltas` and `errors` must point to `n` values; outputs must be valid.
 */
enum RoughEmStatus rough_em_fit_rate(const double *deltas,
                                     const double *errors,
                                     uintptr_t n,
                                     double *slope,
                                     double *intercept,
                                     double *r_squared);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROUGH_EM_H */
