#pragma once

#include <cstddef>

// Dense kernels behind the autodiff ops. Each kernel has a serial reference
// and an OpenMP variant that parallelizes over output rows; both accumulate
// each output element in the same order, so results are bitwise identical
// and the serial build stays usable as a test oracle.

namespace mpctc::kernels {

// Process-wide switch between the serial and OpenMP variants.
bool parallel_enabled();
void set_parallel(bool enabled);
int max_threads();

// c[m x n] = a[m x k] * b[k x n]
void matmul_serial(const double* a, const double* b, double* c, int m, int k,
                   int n);
void matmul_omp(const double* a, const double* b, double* c, int m, int k,
                int n);
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt_serial(const double* a, const double* b, double* c, int m,
                      int k, int n);
void matmul_nt_omp(const double* a, const double* b, double* c, int m, int k,
                   int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k,
               int n);

// c[k x n] = a[m x k]^T * b[m x n]
void matmul_tn_serial(const double* a, const double* b, double* c, int m,
                      int k, int n);
void matmul_tn_omp(const double* a, const double* b, double* c, int m, int k,
                   int n);
void matmul_tn(const double* a, const double* b, double* c, int m, int k,
               int n);

// out[i] = log(sum_j exp(row_i[j])) for each of the m rows.
void row_logsumexp_serial(const double* x, double* out, int m, int n);
void row_logsumexp_omp(const double* x, double* out, int m, int n);
void row_logsumexp(const double* x, double* out, int m, int n);

}  // namespace mpctc::kernels
