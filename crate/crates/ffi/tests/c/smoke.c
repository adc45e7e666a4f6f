#include <stdio.h>
#include <string.h>

#include "hybrid_spmv.h"

#define CHECK(call)                                                                    \
  do {                                                                                 \
    HsStatus s_ = (call);                                                              \
    if (s_ != HS_STATUS_OK) {                                                          \
      fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_, hs_last_error_message()); \
      return 1;                                                                        \
    }                                                                                  \
  } while (0)

int main(void) {
  size_t rows[] = {0, 0, 1, 2, 3, 3};
  size_t cols[] = {0, 3, 1, 2, 0, 3};
  double vals[] = {2, 1, 2, 2, 1, 2};
  HsMatrix *m = NULL;
  CHECK(hs_matrix_from_coo(4, 4, 6, rows, cols, vals, &m));

  double x[] = {1, 2, 3, 4};
  double y[4];
  double expected[] = {6, 4, 6, 9};
  HsMode modes[] = {HS_MODE_FLAT, HS_MODE_VECTOR, HS_MODE_TASK, HS_MODE_TASK_BALANCED};
  for (int k = 0; k < 4; k++) {
    CHECK(hs_spmv(m, modes[k], 2, 2, x, y, 4));
    if (memcmp(y, expected, sizeof y) != 0) {
      fprintf(stderr, "mode %d: wrong product\n", k);
      return 1;
    }
  }

  double b[4], sol[4];
  double ones[] = {1, 1, 1, 1};
  CHECK(hs_spmv(m, HS_MODE_FLAT, 1, 1, ones, b, 4));
  HsSolveReport report;
  CHECK(hs_cg_solve(m, HS_MODE_TASK, 2, 2, b, sol, 4, 1e-12, 0, &report));
  if (!report.converged) {
    fprintf(stderr, "cg did not converge\n");
    return 1;
  }

  if (hs_spmv(m, HS_MODE_TASK, 2, 1, x, y, 4) != HS_STATUS_INVALID_ARGUMENT) {
    fprintf(stderr, "task with one worker accepted\n");
    return 1;
  }
  if (hs_last_error_message() == NULL) {
    return 1;
  }
  hs_matrix_free(m);
  printf("ok %s\n", hs_version());
  return 0;
}
