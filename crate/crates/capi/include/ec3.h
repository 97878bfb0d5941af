#ifndef EC3_H
#define EC3_H

/* Generated by cbindgen from crates/capi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum Ec3Constraint {
  /**
   * alpha + beta + gamma + delta = 1
   */
  EC3_CONSTRAINT_UNIT_SUM = 0,
  /**
   * alpha/2 + beta/2 + gamma + delta = 1
   */
  EC3_CONSTRAINT_HALF_WEIGHTED = 1,
} Ec3Constraint;

typedef enum Ec3Mode {
  EC3_MODE_EC3 = 0,
  EC3_MODE_IEC3 = 1,
} Ec3Mode;

typedef enum Ec3Status {
  EC3_STATUS_OK = 0,
  /**
   * Null pointer or wrong buffer length.
   */
  EC3_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Input or parameters rejected by the library.
   */
  EC3_STATUS_VALIDATION = 2,
  /**
   * Numerical failure while scaling or solving.
   */
  EC3_STATUS_NUMERICAL = 3,
  EC3_STATUS_IO = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  EC3_STATUS_PANIC = 5,
} Ec3Status;

typedef enum Ec3Sweep {
  EC3_SWEEP_GAUSS_SEIDEL = 0,
  EC3_SWEEP_JACOBI = 1,
} Ec3Sweep;

/**
 * Base-method outputs for one set of objects.
 */
typedef struct Ec3Input Ec3Input;

/**
 * Fused class distributions.
 */
typedef struct Ec3Result Ec3Result;

/**
 * Solver settings. Start from [`ec3_config_default`] and change fields.
 */
typedef struct Ec3Config {
  double alpha;
  double beta;
  double gamma;
  double delta;
  /**
   * An [`Ec3Constraint`] value.
   */
  uint32_t constraint;
  double epsilon;
  uint32_t max_iterations;
  uint64_t seed;
  /**
   * An [`Ec3Mode`] value.
   */
  uint32_t mode;
  /**
   * An [`Ec3Sweep`] value.
   */
  uint32_t sweep;
} Ec3Config;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ec3_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into the library from the same thread.
 */
const char *ec3_last_error_message(void);

/**
 * Default settings: weights (0.25, 0.35, 0.35, 0.05) under the unit-sum
 * constraint, epsilon 0.025, 500 iterations, seed 0, iEC3, Gauss-Seidel.
 */
struct Ec3Config ec3_config_default(void);

/**
 * Creates an empty input for `num_objects` objects and `num_classes`
 * classes. Free it with [`ec3_input_free`].
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one pointer.
 */
enum Ec3Status ec3_input_new(size_t num_objects,
                             size_t num_classes,
                             struct Ec3Input **out);

/**
 * Appends a classifier's labels, one per object, in `1..=num_classes`.
 *
 * # Safety
 * `input` must come from [`ec3_input_new`]; `labels` must point to `len`
 * readable values.
 */
enum Ec3Status ec3_input_add_classifier(struct Ec3Input *input,
                                        const uint32_t *labels,
                                        size_t len);

/**
 * Appends a clustering given as arbitrary integer cluster ids.
 *
 * # Safety
 * `input` must come from [`ec3_input_new`]; `ids` must point to `len`
 * readable values.
 */
enum Ec3Status ec3_input_add_clustering(struct Ec3Input *input,
                                        const int64_t *ids,
                                        size_t len);

/**
 * # Safety
 * `input` must be NULL or come from [`ec3_input_new`] and not be freed yet.
 */
void ec3_input_free(struct Ec3Input *input);

/**
 * Fuses `input` under `config` (NULL for defaults). Free the result with
 * [`ec3_result_free`].
 *
 * # Safety
 * `input` must come from [`ec3_input_new`]; `config` must be NULL or
 * valid; `out` must be writable.
 */
enum Ec3Status ec3_fuse(const struct Ec3Input *input,
                        const struct Ec3Config *config,
                        struct Ec3Result **out);

/**
 * # Safety
 * `result` must come from [`ec3_fuse`].
 */
size_t ec3_result_num_objects(const struct Ec3Result *result);

/**
 * # Safety
 * `result` must come from [`ec3_fuse`].
 */
size_t ec3_result_num_classes(const struct Ec3Result *result);

/**
 * # Safety
 * `result` must come from [`ec3_fuse`].
 */
size_t ec3_result_iterations(const struct Ec3Result *result);

/**
 * # Safety
 * `result` must come from [`ec3_fuse`].
 */
bool ec3_result_converged(const struct Ec3Result *result);

/**
 * Objective value of the returned distributions; NaN for a NULL result.
 *
 * # Safety
 * `result` must come from [`ec3_fuse`].
 */
double ec3_result_objective(const struct Ec3Result *result);

/**
 * Copies the `num_objects x num_classes` distributions, row-major, into
 * `out`, which must hold exactly that many values.
 *
 * # Safety
 * `result` must come from [`ec3_fuse`]; `out` must point to `len`
 * writable values.
 */
enum Ec3Status ec3_result_copy_distributions(const struct Ec3Result *result,
                                             double *out,
                                             size_t len);

/**
 * Copies the 1-based argmax labels into `out` (`num_objects` values).
 *
 * # Safety
 * `result` must come from [`ec3_fuse`]; `out` must point to `len`
 * writable values.
 */
enum Ec3Status ec3_result_copy_labels(const struct Ec3Result *result,
                                      uint32_t *out,
                                      size_t len);

/**
 * # Safety
 * `result` must be NULL or come from [`ec3_fuse`] and not be freed yet.
 */
void ec3_result_free(struct Ec3Result *result);

/**
 * AUC of row-major `num_objects x num_classes` scores against 1-based
 * labels: binary AUC of class 2 when there are two classes, macro
 * one-vs-rest otherwise.
 *
 * # Safety
 * `scores` must point to `num_objects * num_classes` values, `truth` to
 * `num_objects` values and `out` to one writable value.
 */
enum Ec3Status ec3_auc(const double *scores,
                       size_t num_objects,
                       size_t num_classes,
                       const uint32_t *truth,
                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EC3_H */
