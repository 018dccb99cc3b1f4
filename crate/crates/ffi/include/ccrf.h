#ifndef CCRF_H
#define CCRF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes of every fallible call.
 */
typedef enum CcrfStatus {
  CCRF_STATUS_OK = 0,
  CCRF_STATUS_NULL_POINTER = 1,
  CCRF_STATUS_SHAPE = 2,
  CCRF_STATUS_INVALID_ARGUMENT = 3,
  CCRF_STATUS_INVALID_PRECISION = 4,
  CCRF_STATUS_FACTORIZATION = 5,
  CCRF_STATUS_FORMAT = 6,
  CCRF_STATUS_IO = 7,
  CCRF_STATUS_PANIC = 8,
} CcrfStatus;

/*
 A trained unary + pairwise model.
 */
typedef struct CcrfModel CcrfModel;

/*
 A factored precision matrix `A0 = I + D - R`.
 */
typedef struct CcrfSystem CcrfSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty if none. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *ccrf_last_error_message(void);

/*
 Validate the `n x n` affinity matrix `r` and factor its precision matrix.

 # Safety
 `r` must point to `n * n` doubles and `out` to a writable handle slot.
 */
enum CcrfStatus ccrf_system_assemble(const double *r, size_t n, struct CcrfSystem **out);

/*
 Node count of a system, or 0 for a null handle.

 # Safety
 `system` must be null or a live handle.
 */
size_t ccrf_system_dim(const struct CcrfSystem *system);

/*
 `log det A0`.

 # Safety
 `system` must be a live handle and `out` a writable double.
 */
enum CcrfStatus ccrf_system_logdet(const struct CcrfSystem *system, double *out);

/*
 MAP estimate `Yhat = A0^-1 Z` for an `n x m` unary matrix `z`.

 # Safety
 `z` and `yhat` must each point to `n * m` doubles.
 */
enum CcrfStatus ccrf_system_map_infer(const struct CcrfSystem *system,
                                      const double *z,
                                      size_t m,
                                      double *yhat);

/*
 Negative conditional log-likelihood of labels `y` given unaries `z` (both `n x m`).

 # Safety
 `y` and `z` must each point to `n * m` doubles and `out` to a writable double.
 */
enum CcrfStatus ccrf_system_nll(const struct CcrfSystem *system,
                                const double *y,
                                const double *z,
                                size_t m,
                                double *out);

/*
 # Safety
 `system` must be null or a handle from [`ccrf_system_assemble`] not yet freed.
 */
void ccrf_system_free(struct CcrfSystem *system);

/*
 Load a checkpoint written by the `ccrf` tool.

 # Safety
 `path` must be a NUL-terminated string and `out` a writable handle slot.
 */
enum CcrfStatus ccrf_model_load(const char *path, struct CcrfModel **out);

/*
 Input feature width, or 0 for a null handle.

 # Safety
 `model` must be null or a live handle.
 */
size_t ccrf_model_feature_dim(const struct CcrfModel *model);

/*
 Label columns per node, or 0 for a null handle.

 # Safety
 `model` must be null or a live handle.
 */
size_t ccrf_model_label_dim(const struct CcrfModel *model);

/*
 Full-model MAP scores for `n` nodes: `features` is `n x feature_dim`,
 `centroids` is `n x 2` (row, column in [0, 1]), `yhat` receives `n x label_dim`.

 # Safety
 Buffers must have the sizes above.
 */
enum CcrfStatus ccrf_model_predict(const struct CcrfModel *model,
                                   const double *features,
                                   const double *centroids,
                                   size_t n,
                                   double *yhat);

/*
 # Safety
 `model` must be null or a handle from [`ccrf_model_load`] not yet freed.
 */
void ccrf_model_free(struct CcrfModel *model);

/*
 Tukey biweight value `rho` and derivative `psi` at residual `r`.

 # Safety
 `rho` and `psi` must be writable doubles.
 */
enum CcrfStatus ccrf_tukey(double r, double c, double *rho, double *psi);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CCRF_H */
