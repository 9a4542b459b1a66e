#include "mpctc/kernels.hpp"

#ifdef MPCTC_HAVE_OPENMP
#include <omp.h>
#endif

namespace mpctc::kernels {

namespace {
bool g_parallel = true;
}

bool parallel_enabled() {
#ifdef MPCTC_HAVE_OPENMP
  return g_parallel;
#else
  return false;
#endif
}

void set_parallel(bool enabled) { g_parallel = enabled; }

int max_threads() {
#ifdef MPCTC_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
  if (parallel_enabled()) {
    matmul_omp(a, b, c, m, k, n);
  } else {
    matmul_serial(a, b, c, m, k, n);
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k,
               int n) {
  if (parallel_enabled()) {
    matmul_nt_omp(a, b, c, m, k, n);
  } else {
    matmul_nt_serial(a, b, c, m, k, n);
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k,
               int n) {
  if (parallel_enabled()) {
    matmul_tn_omp(a, b, c, m, k, n);
  } else {
    matmul_tn_serial(a, b, c, m, k, n);
  }
}

void row_logsumexp(const double* x, double* out, int m, int n) {
  if (parallel_enabled()) {
    row_logsumexp_omp(x, out, m, n);
  } else {
    row_logsumexp_serial(x, out, m, n);
  }
}

}  // namespace mpctc::kernels
