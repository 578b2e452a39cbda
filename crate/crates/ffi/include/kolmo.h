#ifndef KOLMO_H
#define KOLMO_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum KolmoStatus {
  KOLMO_STATUS_OK = 0,
  KOLMO_STATUS_NULL_POINTER = 1,
  KOLMO_STATUS_INVALID_INPUT = 2,
  KOLMO_STATUS_INVALID_OPERATOR = 3,
  KOLMO_STATUS_NOT_CONTROLLABLE = 4,
  KOLMO_STATUS_OUTSIDE_DOMAIN = 5,
  KOLMO_STATUS_NOT_ATTAINABLE = 6,
  KOLMO_STATUS_NUMERICAL = 7,
  KOLMO_STATUS_PANIC = 8,
} KolmoStatus;

typedef enum KolmoCost {
  KOLMO_COST_CONTROLLABILITY = 0,
  KOLMO_COST_GRAMIAN = 1,
} KolmoCost;

/**
 * Opaque validated operator.
 */
typedef struct KolmoOperator KolmoOperator;

typedef struct KolmoConditions {
  bool c1;
  bool c2;
  bool c3;
  bool c4;
  bool c5;
  bool consistent;
  size_t bracket_dimension;
  size_t kalman_rank;
  double min_eigenvalue;
} KolmoConditions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Validates an operator given as `n × n` row-major `a` and `b` plus the
 * stratum sizes, and stores a new handle in `*handle`.
 *
 * # Safety
 * `a` and `b` must point to `n*n` doubles, `strata` to `n_strata` sizes.
 */
enum KolmoStatus kolmo_operator_new(size_t n,
                                    const double *a,
                                    const double *b,
                                    const size_t *strata,
                                    size_t n_strata,
                                    struct KolmoOperator **handle);

/**
 * Same as [`kolmo_operator_new`] from the JSON operator format.
 *
 * # Safety
 * `json` must be a NUL-terminated string.
 */
enum KolmoStatus kolmo_operator_from_json(const char *json, struct KolmoOperator **handle);

/**
 * # Safety
 * `op` must come from this library and not be used afterwards. Null is a no-op.
 */
void kolmo_operator_free(struct KolmoOperator *op);

/**
 * Spatial dimension N, or 0 for a null handle.
 *
 * # Safety
 * `op` must be null or a live handle.
 */
size_t kolmo_operator_dim(const struct KolmoOperator *op);

/**
 * Sum of the spatial dilation exponents, or 0 for a null handle.
 *
 * # Safety
 * `op` must be null or a live handle.
 */
size_t kolmo_operator_homogeneous_dim(const struct KolmoOperator *op);

/**
 * Structural conditions of an unvalidated operator. Degenerate operators
 * are reported, not rejected.
 *
 * # Safety
 * See [`kolmo_operator_new`]; `report` must be writable.
 */
enum KolmoStatus kolmo_classify(size_t n,
                                const double *a,
                                const double *b,
                                const size_t *strata,
                                size_t n_strata,
                                struct KolmoConditions *report);

/**
 * Fundamental solution Γ(z; ζ). Both `value` and `log_value` are written;
 * either may be null.
 *
 * # Safety
 * `x` and `xi` must point to N doubles.
 */
enum KolmoStatus kolmo_gamma(const struct KolmoOperator *op,
                             const double *x,
                             double t,
                             const double *xi,
                             double tau,
                             double *value,
                             double *log_value);

/**
 * `n` exact samples of the associated SDE at time `t` from `x0`, written
 * row-major into `samples` (room for `n*N` doubles).
 *
 * # Safety
 * `x0` must point to N doubles, `samples` to `n*N`.
 */
enum KolmoStatus kolmo_sample_exact(const struct KolmoOperator *op,
                                    const double *x0,
                                    double t,
                                    size_t n,
                                    uint64_t seed,
                                    double *samples);

/**
 * Minimal control cost from `x0` to `x1` over horizon `tau`.
 *
 * # Safety
 * `x0` and `x1` must point to N doubles.
 */
enum KolmoStatus kolmo_optimal_cost(const struct KolmoOperator *op,
                                    const double *x0,
                                    const double *x1,
                                    double tau,
                                    enum KolmoCost convention,
                                    double *cost);

/**
 * Harnack chain bound u(target) ≤ c^k u(z0) inside the box `lo`/`hi`
 * (N+1 coordinates each, time last) with the default constants. Writes the
 * chain length and the bound.
 *
 * # Safety
 * Points hold N doubles, `lo` and `hi` N+1.
 */
enum KolmoStatus kolmo_harnack_bound(const struct KolmoOperator *op,
                                     const double *x0,
                                     double t0,
                                     const double *x,
                                     double t,
                                     const double *lo,
                                     const double *hi,
                                     size_t *links,
                                     double *bound);

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `len`. Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t kolmo_last_error(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KOLMO_H */
