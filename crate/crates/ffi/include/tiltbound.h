#ifndef TILTBOUND_H
#define TILTBOUND_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Extension flag for [`tb_conjugate`]: affine continuation with the
 * boundary slope.
 */
#define TB_EXTEND_AFFINE 0

/**
 * Extension flag for [`tb_conjugate`]: `+inf` outside the grid.
 */
#define TB_EXTEND_INFINITE 1

/**
 * Result codes.
 */
typedef enum TbStatus {
  TB_STATUS_OK = 0,
  /**
   * An argument lies outside a Kramer window.
   */
  TB_STATUS_DOMAIN = 1,
  TB_STATUS_INVALID = 2,
  TB_STATUS_DIMENSION = 3,
  TB_STATUS_NOT_CONVEX = 4,
  TB_STATUS_NUMERICAL = 5,
  TB_STATUS_IO = 6,
  TB_STATUS_PARSE = 7,
  TB_STATUS_NULL_POINTER = 8,
  TB_STATUS_PANIC = 9,
} TbStatus;

/**
 * Opaque handle to a scalar random source.
 */
typedef struct TbSource TbSource;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into the library from the same thread.
 */
const char *tb_last_error_message(void);

/**
 * Builds a source from its JSON description, e.g.
 * `{"kind":"gaussian","sigma":1.0}`. Free with [`tb_source_free`].
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out_source` must be writable.
 */
enum TbStatus tb_source_from_json(const char *json, struct TbSource **out_source);

/**
 * Releases a source. NULL is accepted.
 *
 * # Safety
 * `source` must come from [`tb_source_from_json`] and not be freed twice.
 */
void tb_source_free(struct TbSource *source);

/**
 * Half-width of the Kramer window; `+inf` when the MGF is finite everywhere.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TbStatus tb_source_window(const struct TbSource *source, double *out_lambda0);

/**
 * `ln E exp(λX)` with the default method for the source.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TbStatus tb_log_mgf(const struct TbSource *source, double lambda, double *out_value);

/**
 * Second derivative of the log-MGF, i.e. the variance of the tilted law.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TbStatus tb_cgf_second_derivative(const struct TbSource *source,
                                       double lambda,
                                       double *out_value);

/**
 * Norm of the source in the space generated by `φ(λ) = λ²/2`, estimated
 * over the `n` points of `grid`. Infinite norms are reported as `+inf`.
 *
 * # Safety
 * `grid` must point to `n` doubles; `out_norm` must be writable.
 */
enum TbStatus tb_bphi_norm_phi2(const struct TbSource *source,
                                const double *grid,
                                size_t n,
                                double *out_norm);

/**
 * `exp(-φ*(x/ρ))` for `φ(λ) = λ²/2` and norm `rho`.
 *
 * # Safety
 * `out_bound` must be writable.
 */
enum TbStatus tb_tail_bound_phi2(double rho, double x, double *out_bound);

/**
 * Writes 1 when the family `φ(λ) = λ^m ln^γ λ` (large λ) is LC, else 0.
 *
 * # Safety
 * `out_is_lc` must be writable.
 */
enum TbStatus tb_classify_family_lc(double m, double gamma, int32_t *out_is_lc);

/**
 * Legendre conjugate of the piecewise-linear function through
 * `(grid[i], values[i])`, evaluated at `out_grid`. Entries may be `+inf`.
 * `extension` is `TB_EXTEND_AFFINE` or `TB_EXTEND_INFINITE` and applies on
 * both sides. Non-convex input is replaced by its convex hull.
 *
 * # Safety
 * `grid` and `values` must point to `n` doubles, `out_grid` and `out_values`
 * to `m` doubles.
 */
enum TbStatus tb_conjugate(const double *grid,
                           const double *values,
                           size_t n,
                           int32_t extension_flag,
                           const double *out_grid,
                           size_t m,
                           double *out_values);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TILTBOUND_H */
