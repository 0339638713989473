/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef SPARSEFUN_H
#define SPARSEFUN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum SfStatus {
  SF_OK = 0,
  SF_ERR_NULL = 1,
  SF_ERR_ARGUMENT = 2,
  SF_ERR_INPUT = 3,
  SF_ERR_NUMERICAL = 4,
  SF_ERR_IO = 5,
  SF_ERR_PANIC = 6,
} SfStatus;

/**
 * Which process a univariate component belongs to.
 */
typedef enum SfProcess {
  SF_PROCESS_X = 0,
  SF_PROCESS_Y = 1,
} SfProcess;

/**
 * Opaque fitted model.
 */
typedef struct SfModel SfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. Valid until the next call
 * on the same thread; never null.
 */
const char *sf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sf_version(void);

/**
 * Loads a model file written by the command-line tool or [`sf_fit_csv`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SfStatus sf_model_load(const char *path, struct SfModel **out);

/**
 * Fits a model to a long-format CSV with default settings and saves it to
 * `model_path`. `out` may be null when only the file is wanted.
 *
 * # Safety
 * Paths must be NUL-terminated strings; `out` null or valid.
 */
enum SfStatus sf_fit_csv(const char *data_path,
                         const char *model_path,
                         uint64_t seed,
                         struct SfModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void sf_model_free(struct SfModel *model);

/**
 * Domain bounds of one process.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SfStatus sf_model_domain(const struct SfModel *model,
                              enum SfProcess process,
                              double *lo,
                              double *hi);

/**
 * Truncation levels `(J1, J2)` of the coefficient surface.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SfStatus sf_model_truncation(const struct SfModel *model, uintptr_t *j1, uintptr_t *j2);

/**
 * `beta(s_i, t_j)` into `out[i * nt + j]`.
 *
 * # Safety
 * `s`, `t` hold `ns`, `nt` values; `out` holds `ns * nt`.
 */
enum SfStatus sf_model_eval_beta(const struct SfModel *model,
                                 const double *s,
                                 uintptr_t ns,
                                 const double *t,
                                 uintptr_t nt,
                                 double *out);

/**
 * Cross-covariance `C(s_i, t_j)` into `out[i * nt + j]`.
 *
 * # Safety
 * As for [`sf_model_eval_beta`].
 */
enum SfStatus sf_model_eval_crosscov(const struct SfModel *model,
                                     const double *s,
                                     uintptr_t ns,
                                     const double *t,
                                     uintptr_t nt,
                                     double *out);

/**
 * Mean function of one process at `n` points.
 *
 * # Safety
 * `t` and `out` hold `n` values.
 */
enum SfStatus sf_model_eval_mean(const struct SfModel *model,
                                 enum SfProcess process,
                                 const double *t,
                                 uintptr_t n,
                                 double *out);

/**
 * Predicted response on `grid` from `m` predictor observations.
 *
 * # Safety
 * `times`, `values` hold `m` values; `grid` and `out` hold `g`.
 */
enum SfStatus sf_model_predict(const struct SfModel *model,
                               const double *times,
                               const double *values,
                               uintptr_t m,
                               const double *grid,
                               uintptr_t g,
                               double *out);

/**
 * Sobolev kernel `K(s, t)` of the given order on `[lo, hi]`.
 *
 * # Safety
 * `out` must be valid.
 */
enum SfStatus sf_kernel_eval(uint32_t order, double lo, double hi, double s, double t, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSEFUN_H */
