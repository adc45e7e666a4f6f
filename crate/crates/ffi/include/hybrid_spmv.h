#ifndef HYBRID_SPMV_H
#define HYBRID_SPMV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum HsStatus {
  HS_STATUS_OK = 0,
  HS_STATUS_NULL_POINTER = 1,
  HS_STATUS_INVALID_ARGUMENT = 2,
  HS_STATUS_PARSE_ERROR = 3,
  HS_STATUS_IO_ERROR = 4,
  HS_STATUS_STALLED = 5,
  HS_STATUS_DIVERGED = 6,
  HS_STATUS_RUNTIME_ERROR = 7,
  HS_STATUS_PANIC = 8,
} HsStatus;

typedef enum HsMode {
  HS_MODE_FLAT = 0,
  HS_MODE_VECTOR = 1,
  HS_MODE_TASK = 2,
  HS_MODE_TASK_BALANCED = 3,
} HsMode;

typedef enum HsPartitionScheme {
  /**
   * Row counts differ by at most one.
   */
  HS_PARTITION_SCHEME_EVEN_ROWS = 0,
  /**
   * Greedy split refined by diffusion.
   */
  HS_PARTITION_SCHEME_BALANCED_NNZ = 1,
} HsPartitionScheme;

/**
 * Opaque square or rectangular CSR matrix.
 */
typedef struct HsMatrix HsMatrix;

/**
 * Outcome of [`hs_cg_solve`].
 */
typedef struct HsSolveReport {
  size_t iterations;
  double relative_residual;
  bool converged;
  /**
   * Slowest rank's time inside the multiply.
   */
  double spmv_seconds;
  /**
   * Slowest rank's total solve time.
   */
  double total_seconds;
} HsSolveReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the most recent failure on this thread, or null.
 */
const char *hs_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hs_version(void);

/**
 * Assembles a matrix from `nnz` zero-based triplets; duplicates are summed.
 *
 * # Safety
 * `rows`, `cols` and `vals` must each point to `nnz` readable elements and
 * `out` must be writable.
 */
enum HsStatus hs_matrix_from_coo(size_t nrows,
                                 size_t ncols,
                                 size_t nnz,
                                 const size_t *rows,
                                 const size_t *cols,
                                 const double *vals,
                                 struct HsMatrix **out);

/**
 * Reads a coordinate Matrix Market file.
 *
 * # Safety
 * `file` must be a NUL-terminated string and `out` writable.
 */
enum HsStatus hs_matrix_read_mm(const char *file, struct HsMatrix **out);

/**
 * Writes the matrix as a general coordinate Matrix Market file.
 *
 * # Safety
 * `m` must come from this library and `file` must be NUL-terminated.
 */
enum HsStatus hs_matrix_write_mm(const struct HsMatrix *m, const char *file);

/**
 * Shifted 7-point Laplacian on an `nx x ny` grid extruded over `layers`.
 *
 * # Safety
 * `out` must be writable.
 */
enum HsStatus hs_matrix_gen_extruded(size_t nx, size_t ny, size_t layers, struct HsMatrix **out);

/**
 * Symmetric matrix with a fraction of heavy rows.
 *
 * # Safety
 * `out` must be writable.
 */
enum HsStatus hs_matrix_gen_skewed(size_t n,
                                   double heavy_fraction,
                                   size_t heavy_nnz,
                                   size_t light_nnz,
                                   uint64_t seed,
                                   struct HsMatrix **out);

/**
 * Releases a matrix. Null is ignored.
 *
 * # Safety
 * `m` must be null or a handle from this library not yet freed.
 */
void hs_matrix_free(struct HsMatrix *m);

/**
 * # Safety
 * `m` must be null or a live handle. Returns 0 for null.
 */
size_t hs_matrix_nrows(const struct HsMatrix *m);

/**
 * # Safety
 * `m` must be null or a live handle. Returns 0 for null.
 */
size_t hs_matrix_ncols(const struct HsMatrix *m);

/**
 * # Safety
 * `m` must be null or a live handle. Returns 0 for null.
 */
size_t hs_matrix_nnz(const struct HsMatrix *m);

/**
 * `y = A x` over `ranks` simulated ranks with even row ownership.
 *
 * # Safety
 * `x` and `y` must hold `n` elements where `n` is the matrix order.
 */
enum HsStatus hs_spmv(const struct HsMatrix *m,
                      enum HsMode mode,
                      size_t ranks,
                      size_t workers,
                      const double *x,
                      double *y,
                      size_t n);

/**
 * Jacobi-preconditioned CG for `A x = b` from a zero initial guess.
 * `max_iters == 0` selects the default cap of 10000. `report` may be null.
 *
 * # Safety
 * `b` and `x` must hold `n` elements where `n` is the matrix order.
 */
enum HsStatus hs_cg_solve(const struct HsMatrix *m,
                          enum HsMode mode,
                          size_t ranks,
                          size_t workers,
                          const double *b,
                          double *x,
                          size_t n,
                          double rtol,
                          size_t max_iters,
                          struct HsSolveReport *report);

/**
 * Splits `len` rows with the given per-row loads among `workers`.
 * Writes `workers + 1` boundaries and, if non-null, the imbalance ratio.
 *
 * # Safety
 * `row_nnz` must hold `len` elements and `boundaries` `workers + 1`.
 */
enum HsStatus hs_partition(const size_t *row_nnz,
                           size_t len,
                           size_t workers,
                           enum HsPartitionScheme scheme,
                           size_t *boundaries,
                           double *imbalance);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYBRID_SPMV_H */
