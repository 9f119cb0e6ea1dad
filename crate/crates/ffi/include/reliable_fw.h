#ifndef RELIABLE_FW_H
#define RELIABLE_FW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RfwStatus {
  RFW_STATUS_OK = 0,
  RFW_STATUS_NULL_POINTER = 1,
  RFW_STATUS_INVALID_ARGUMENT = 2,
  RFW_STATUS_DIMENSION = 3,
  RFW_STATUS_INVALID_POLYTOPE = 4,
  RFW_STATUS_INFEASIBLE_START = 5,
  RFW_STATUS_UNKNOWN_NAME = 6,
  RFW_STATUS_CONFIG = 7,
  RFW_STATUS_NUMERICAL = 8,
  RFW_STATUS_VICINITY = 9,
  RFW_STATUS_IO = 10,
  RFW_STATUS_BUFFER_TOO_SMALL = 11,
  RFW_STATUS_PANIC = 12,
} RfwStatus;

/**
 * Solver settings.
 */
typedef struct RfwConfig RfwConfig;

/**
 * A problem instance: objective, hidden polytope and start point.
 */
typedef struct RfwProblem RfwProblem;

/**
 * The result of one run.
 */
typedef struct RfwRun RfwRun;

/**
 * Scalar summary of a run.
 */
typedef struct RfwRunStats {
  size_t horizon;
  size_t iterations;
  /**
   * Index of the returned iterate.
   */
  size_t t0;
  uint64_t sfo_count;
  /**
   * Feasibility-oracle calls. May exceed 2^64, hence a double.
   */
  double nfo_count;
  double f_out;
  /**
   * Smallest true constraint residual over all iterates.
   */
  double min_true_residual;
  bool safe;
  uint64_t guard_trips;
} RfwRunStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *rfw_last_error(void);

/**
 * Static description of a status code.
 */
const char *rfw_status_message(enum RfwStatus status);

const char *rfw_version(void);

/**
 * Built-in problem by id (`cutting-machine`, `quad-box`, `quad-polytope`,
 * `trig-polytope`, ...). `d`, `m` and `seed` only affect synthetic kinds.
 *
 * # Safety
 * `id` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RfwStatus rfw_problem_new(const char *id,
                               size_t d,
                               size_t m,
                               uint64_t seed,
                               struct RfwProblem **out);

/**
 * Quadratic `‖x − center‖²` over `{x : A x ≤ b}`. `a` is row-major `m × d`.
 *
 * # Safety
 * `a` must hold `m*d` doubles, `b` `m`, `center` and `x0` `d` each.
 */
enum RfwStatus rfw_problem_quadratic(const double *a,
                                     const double *b,
                                     size_t m,
                                     size_t d,
                                     const double *center,
                                     const double *x0,
                                     struct RfwProblem **out);

/**
 * # Safety
 * `p` must come from a problem constructor, or be null.
 */
size_t rfw_problem_dim(const struct RfwProblem *p);

/**
 * # Safety
 * `p` must come from a problem constructor, or be null.
 */
size_t rfw_problem_constraints(const struct RfwProblem *p);

/**
 * # Safety
 * `p` must come from a problem constructor and not be used afterwards.
 */
void rfw_problem_free(struct RfwProblem *p);

/**
 * Default settings.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RfwStatus rfw_config_new(struct RfwConfig **out);

/**
 * Sets one solver option, e.g. `("variant", "convex-deterministic")` or
 * `("horizon", "200")`. Keys match the command-line experiment files.
 *
 * # Safety
 * `c` must come from [`rfw_config_new`]; `key` and `value` must be
 * NUL-terminated strings.
 */
enum RfwStatus rfw_config_set(struct RfwConfig *c, const char *key, const char *value);

/**
 * # Safety
 * `c` must come from [`rfw_config_new`] and not be used afterwards.
 */
void rfw_config_free(struct RfwConfig *c);

/**
 * Runs the solver. On success `*out` owns the result.
 *
 * # Safety
 * `p` and `c` must be live handles and `out` a valid pointer.
 */
enum RfwStatus rfw_run(const struct RfwProblem *p, const struct RfwConfig *c, struct RfwRun **out);

/**
 * # Safety
 * `r` must be a live run handle and `out` a valid pointer.
 */
enum RfwStatus rfw_run_stats(const struct RfwRun *r, struct RfwRunStats *out);

/**
 * Copies the returned point into `buf`, which holds `len` doubles.
 *
 * # Safety
 * `r` must be a live run handle and `buf` valid for `len` writes.
 */
enum RfwStatus rfw_run_x_out(const struct RfwRun *r, double *buf, size_t len);

/**
 * Copies iterate `t` into `buf`.
 *
 * # Safety
 * `r` must be a live run handle and `buf` valid for `len` writes.
 */
enum RfwStatus rfw_run_iterate(const struct RfwRun *r, size_t t, double *buf, size_t len);

/**
 * Writes the per-iteration trace as CSV.
 *
 * # Safety
 * `r` must be a live run handle and `path` a NUL-terminated string.
 */
enum RfwStatus rfw_run_write_trace(const struct RfwRun *r, const char *path);

/**
 * # Safety
 * `r` must come from [`rfw_run`] and not be used afterwards.
 */
void rfw_run_free(struct RfwRun *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELIABLE_FW_H */
