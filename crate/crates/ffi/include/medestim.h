#ifndef MEDESTIM_H
#define MEDESTIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define MED_ESTIMATOR_COEFFICIENT_PRODUCT 0

#define MED_ESTIMATOR_G_COMPUTATION 1

#define MED_ESTIMATOR_IPW 2

#define MED_ESTIMATOR_MULTIPLY_ROBUST 3

#define MED_ESTIMATOR_DML 4

#define MED_FAMILY_LINEAR 0

#define MED_FAMILY_LINEAR_RIDGE_CV 1

#define MED_FAMILY_FOREST 2

typedef enum MedStatus {
  MED_STATUS_OK = 0,
  MED_STATUS_NULL_POINTER = 1,
  MED_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Invalid configuration or unsupported combination.
   */
  MED_STATUS_CONFIG = 3,
  /**
   * Malformed or degenerate data.
   */
  MED_STATUS_DATA = 4,
  MED_STATUS_PANIC = 5,
} MedStatus;

/**
 * Opaque dataset handle.
 */
typedef struct MedDataset MedDataset;

/**
 * Opaque nuisance specification handle.
 */
typedef struct MedSpec MedSpec;

/**
 * The five effects, in the order total, θ(1), θ(0), δ(1), δ(0).
 */
typedef struct MedEffects {
  double total;
  double direct_1;
  double direct_0;
  double indirect_1;
  double indirect_0;
} MedEffects;

typedef struct MedBootstrap {
  struct MedEffects point;
  struct MedEffects ci_low;
  struct MedEffects ci_high;
  /**
   * Replicates dropped as degenerate.
   */
  size_t n_failed;
} MedBootstrap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies row-major arrays into a new dataset. `x` is `n × dim_x`, `m` is
 * `n × dim_m`, `t` and `y` have length `n`. A nonzero `binary_mediator`
 * requires `dim_m == 1`.
 *
 * # Safety
 * Each array must be valid for reads of the stated number of `f64`s and
 * `out` must be valid for one pointer write.
 */
enum MedStatus med_dataset_new(const double *x,
                               const double *t,
                               const double *m,
                               const double *y,
                               size_t n,
                               size_t dim_x,
                               size_t dim_m,
                               bool binary_mediator,
                               struct MedDataset **out);

/**
 * Generates `n` rows of canonical simulation setting `setting` (1 to 36).
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum MedStatus med_dataset_simulate(uint32_t setting,
                                    size_t n,
                                    uint64_t seed,
                                    struct MedDataset **out);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t med_dataset_rows(const struct MedDataset *ds);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void med_dataset_free(struct MedDataset *ds);

/**
 * Creates a nuisance specification with default settings for `family`,
 * `crossfit_folds` folds (0 disables cross-fitting) and `seed`.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum MedStatus med_spec_new(uint32_t family,
                            size_t crossfit_folds,
                            bool calibrate,
                            uint64_t seed,
                            struct MedSpec **out);

/**
 * # Safety
 * `spec` must be null or a handle not yet freed.
 */
void med_spec_free(struct MedSpec *spec);

/**
 * Point estimates of all five effects. A null `spec` means the default
 * unregularized linear specification.
 *
 * # Safety
 * `ds` must be a live handle, `spec` null or a live handle, and `out`
 * valid for one write.
 */
enum MedStatus med_estimate(uint32_t estimator_id,
                            const struct MedDataset *ds,
                            const struct MedSpec *spec,
                            struct MedEffects *out);

/**
 * Percentile bootstrap with `b` replicates.
 *
 * # Safety
 * As for [`med_estimate`].
 */
enum MedStatus med_bootstrap(uint32_t estimator_id,
                             const struct MedDataset *ds,
                             const struct MedSpec *spec,
                             size_t b,
                             uint64_t seed,
                             struct MedBootstrap *out);

/**
 * Monte-Carlo true effects of a canonical setting; `std_error` may be null.
 *
 * # Safety
 * `out` must be valid for one write; `std_error` null or valid for one
 * write.
 */
enum MedStatus med_true_effects(uint32_t setting,
                                size_t mc_samples,
                                uint64_t seed,
                                struct MedEffects *out,
                                struct MedEffects *std_error);

/**
 * Message of the last failure on this thread as a new string to release
 * with [`med_string_free`], or null if there was none.
 */
char *med_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void med_string_free(char *s);

/**
 * Library version as a static NUL-terminated string.
 */
const char *med_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEDESTIM_H */
