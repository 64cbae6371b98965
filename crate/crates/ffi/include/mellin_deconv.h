#ifndef MELLIN_DECONV_H
#define MELLIN_DECONV_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes returned by every fallible function.
 */
typedef enum MdStatus {
  MD_OK = 0,
  MD_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8 or did not parse.
   */
  MD_INVALID_ARGUMENT = 2,
  MD_STRIP_VIOLATION = 3,
  MD_NON_CONVERGENCE = 4,
  MD_POLE_ERROR = 5,
  MD_ILL_CONDITIONED = 6,
  MD_GRID_RESOLUTION = 7,
  MD_DIVERGENT_INTEGRAND = 8,
  MD_NOT_IDENTIFIABLE = 9,
  MD_EMPTY_SAMPLE = 10,
  MD_DOMAIN_ERROR = 11,
  MD_DEGENERATE_DESIGN = 12,
  MD_INVALID_PARAMETER = 13,
  /**
   * An internal panic was caught at the boundary.
   */
  MD_PANIC = 14,
} MdStatus;

/**
 * A parsed error density.
 */
typedef struct MdErrorModel MdErrorModel;

/**
 * An estimator with a fixed target, kernel, line and bandwidth.
 */
typedef struct MdEstimator MdEstimator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *md_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns its full length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t md_last_error_message(char *buf, size_t len);

/**
 * Parses a model such as `uniform:1`, `beta:1,2` or `gamma:2,1`.
 *
 * # Safety
 * `spec` must be a NUL-terminated string; `out_model` must be writable.
 */
enum MdStatus md_error_model_parse(const char *spec, struct MdErrorModel **out_model);

/**
 * # Safety
 * `model` must be null or come from [`md_error_model_parse`], freed once.
 */
void md_error_model_free(struct MdErrorModel *model);

/**
 * Closed-form Mellin transform at `re + i·im`.
 *
 * # Safety
 * `model` must be a live handle; outputs must be writable.
 */
enum MdStatus md_mellin_eval(const struct MdErrorModel *model,
                             double re,
                             double im,
                             double *out_re,
                             double *out_im);

/**
 * Estimator of `f_X(x0)`; `kernel` uses the CLI grammar (`gaussian:2`).
 *
 * # Safety
 * `model` must be a live handle, `kernel` NUL-terminated, `out_est` writable.
 */
enum MdStatus md_estimator_new_point(const struct MdErrorModel *model,
                                     const char *kernel,
                                     double x0,
                                     double s,
                                     double h,
                                     struct MdEstimator **out_est);

/**
 * Estimator of `f_X(0)`; `kernel` is typically `exponential:2`.
 *
 * # Safety
 * As for [`md_estimator_new_point`].
 */
enum MdStatus md_estimator_new_zero(const struct MdErrorModel *model,
                                    const char *kernel,
                                    double s,
                                    double h,
                                    struct MdEstimator **out_est);

/**
 * # Safety
 * `est` must be null or come from an `md_estimator_new_*` call, freed once.
 */
void md_estimator_free(struct MdEstimator *est);

/**
 * Evaluates the estimator on `n` observations. `out_warnings` (may be null)
 * receives the number of warnings raised.
 *
 * # Safety
 * `sample` must point to `n` doubles; `out_value` must be writable.
 */
enum MdStatus md_estimate(const struct MdEstimator *est,
                          const double *sample,
                          size_t n,
                          double *out_value,
                          uint32_t *out_warnings);

/**
 * Bandwidth for smooth errors at a point.
 *
 * # Safety
 * `out_h` must be writable.
 */
enum MdStatus md_bandwidth_smooth(double a,
                                  double beta,
                                  double gamma,
                                  double x0,
                                  double n,
                                  double *out_h);

/**
 * Bandwidth and line for the estimator at the origin.
 *
 * # Safety
 * `out_h` and `out_s` must be writable.
 */
enum MdStatus md_bandwidth_zero(double a,
                                double beta,
                                double m,
                                double p,
                                double q,
                                double n,
                                double *out_h,
                                double *out_s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MELLIN_DECONV_H */
