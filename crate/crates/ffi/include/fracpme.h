#ifndef FRACPME_H
#define FRACPME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes shared by every entry point.
 */
typedef enum FracpmeStatus {
  FRACPME_STATUS_OK = 0,
  FRACPME_STATUS_NULL_POINTER = 1,
  FRACPME_STATUS_INVALID_ARGUMENT = 2,
  FRACPME_STATUS_NON_CONVERGENCE = 3,
  FRACPME_STATUS_SOLVER_FAILURE = 4,
  FRACPME_STATUS_OUT_OF_RANGE = 5,
  FRACPME_STATUS_PANIC = 6,
} FracpmeStatus;

/**
 * Completed trajectory.
 */
typedef struct FracpmeHistory FracpmeHistory;

/**
 * Problem constants; the Newton settings take their defaults.
 */
typedef struct FracpmeParams {
  double gamma;
  double s;
  double m;
  double a;
  double t_final;
  size_t k;
} FracpmeParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread. The pointer stays valid until
 * the next failing call on the same thread.
 */
const char *fracpme_last_error(void);

/**
 * Solves `k` implicit steps on a periodic grid of `n^dim` nodes.
 *
 * `initial` holds `n^dim` values in row-major order. `forcing` is null for an
 * unforced run, or holds `k * n^dim` values for steps `1..=k`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` receives a handle to
 * release with `fracpme_history_free`.
 */
enum FracpmeStatus fracpme_solve(const struct FracpmeParams *params,
                                 size_t dim,
                                 size_t n,
                                 double length,
                                 const double *initial,
                                 size_t initial_len,
                                 const double *forcing,
                                 size_t forcing_len,
                                 struct FracpmeHistory **out);

/**
 * # Safety
 * `history` must be null or a handle from `fracpme_solve` not yet freed.
 */
void fracpme_history_free(struct FracpmeHistory *history);

/**
 * Number of stored states, `k + 1`; zero for a null handle.
 *
 * # Safety
 * `history` must be null or a live handle.
 */
size_t fracpme_history_len(const struct FracpmeHistory *history);

/**
 * Values per state, `n^dim`; zero for a null handle.
 *
 * # Safety
 * `history` must be null or a live handle.
 */
size_t fracpme_history_field_len(const struct FracpmeHistory *history);

/**
 * Copies state `j` into `out`, which must hold `n^dim` values.
 *
 * # Safety
 * `history` must be a live handle and `out` valid for `out_len` writes.
 */
enum FracpmeStatus fracpme_history_copy_step(const struct FracpmeHistory *history,
                                             size_t j,
                                             double *out,
                                             size_t out_len);

/**
 * Time and mass of state `j`.
 *
 * # Safety
 * `history` must be a live handle; `time` and `mass` valid for one write each.
 */
enum FracpmeStatus fracpme_history_mass(const struct FracpmeHistory *history,
                                        size_t j,
                                        double *time,
                                        double *mass);

/**
 * `E_gamma(z)` for `0 < gamma <= 1`, `z <= 0`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum FracpmeStatus fracpme_mittag_leffler(double gamma, double z, double *out);

/**
 * Spectral `(-Delta)^s` of `input` on the periodic grid, `0 < s <= 1`.
 *
 * # Safety
 * `input` and `output` must each be valid for `len` values and may not overlap.
 */
enum FracpmeStatus fracpme_frac_laplacian(size_t dim,
                                          size_t n,
                                          double length,
                                          double s,
                                          const double *input,
                                          double *output,
                                          size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRACPME_H */
