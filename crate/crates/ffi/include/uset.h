#ifndef USET_H
#define USET_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum UsetStatus {
  USET_STATUS_OK = 0,
  USET_STATUS_NULL_POINTER = 1,
  USET_STATUS_INVALID_ARGUMENT = 2,
  USET_STATUS_DIMENSION_MISMATCH = 3,
  USET_STATUS_INFEASIBLE = 4,
  USET_STATUS_NON_CONVERGENCE = 5,
  USET_STATUS_NUMERICAL = 6,
  USET_STATUS_IO = 7,
  USET_STATUS_PANIC = 8,
} UsetStatus;

/**
 * Opaque loss handle.
 */
typedef struct UsetLoss UsetLoss;

/**
 * Opaque trained-model handle.
 */
typedef struct UsetModel UsetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if the last call
 * succeeded. The pointer stays valid until the next call on the same thread.
 */
const char *uset_last_error(void);

/**
 * Parses a loss such as `"tq"`, `"exp"`, `"hinge:nu=0.5"` or
 * `"esterr:h=1,w=1"`.
 *
 * # Safety
 * `spec` must be a nul-terminated string and `loss_out` a writable pointer.
 */
enum UsetStatus uset_loss_new(const char *spec, struct UsetLoss **loss_out);

/**
 * # Safety
 * `loss` must come from [`uset_loss_new`] and not be used afterwards.
 */
void uset_loss_free(struct UsetLoss *loss);

/**
 * # Safety
 * `loss` must be a live handle and `value_out` writable.
 */
enum UsetStatus uset_loss_eval(const struct UsetLoss *loss, double z, double *value_out);

/**
 * Convex conjugate at `alpha`; `+inf` outside its domain.
 *
 * # Safety
 * `loss` must be a live handle and `value_out` writable.
 */
enum UsetStatus uset_loss_conjugate(const struct UsetLoss *loss, double alpha, double *value_out);

/**
 * Trains on `rows` samples of dimension `cols`, stored row-major in `x`,
 * with labels `y` in {-1, +1}. A `gamma` of zero selects the linear kernel,
 * a positive one the Gaussian kernel `exp(-gamma |a - b|^2)`. The whole set
 * is used both for the decision function and for the bias.
 *
 * # Safety
 * `x` must hold `rows * cols` values, `y` `rows` values, `loss` must be a
 * live handle and `model_out` writable.
 */
enum UsetStatus uset_train(const double *x,
                           const int32_t *y,
                           size_t rows,
                           size_t cols,
                           const struct UsetLoss *loss,
                           double lambda,
                           double gamma,
                           struct UsetModel **model_out);

/**
 * # Safety
 * `path` must be a nul-terminated string and `model_out` writable.
 */
enum UsetStatus uset_model_load(const char *path, struct UsetModel **model_out);

/**
 * # Safety
 * `model` must be a live handle and `path` a nul-terminated string.
 */
enum UsetStatus uset_model_save(const struct UsetModel *model, const char *path);

/**
 * Input dimension expected by the model.
 *
 * # Safety
 * `model` must be a live handle and `dim_out` writable.
 */
enum UsetStatus uset_model_dim(const struct UsetModel *model, size_t *dim_out);

/**
 * Writes `f(x) + b` for each of the `rows` samples into `values_out`.
 *
 * # Safety
 * `x` must hold `rows * cols` values and `values_out` room for `rows`.
 */
enum UsetStatus uset_model_decision(const struct UsetModel *model,
                                    const double *x,
                                    size_t rows,
                                    size_t cols,
                                    double *values_out);

/**
 * Writes the predicted label (-1 or +1) of each sample into `labels_out`.
 *
 * # Safety
 * `x` must hold `rows * cols` values and `labels_out` room for `rows`.
 */
enum UsetStatus uset_model_predict(const struct UsetModel *model,
                                   const double *x,
                                   size_t rows,
                                   size_t cols,
                                   int32_t *labels_out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void uset_model_free(struct UsetModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* USET_H */
