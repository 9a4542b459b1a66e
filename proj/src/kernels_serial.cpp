#include <cmath>
#include <limits>

#include "mpctc/kernels.hpp"

namespace mpctc::kernels {

void matmul_serial(const double* a, const double* b, double* c, int m, int k,
                   int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) ci[j] = 0.0;
    for (int p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_nt_serial(const double* a, const double* b, double* c, int m,
                      int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
}

void matmul_tn_serial(const double* a, const double* b, double* c, int m,
                      int k, int n) {
  for (int i = 0; i < k; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < m; ++p) {
        acc += a[static_cast<std::size_t>(p) * k + i] *
               b[static_cast<std::size_t>(p) * n + j];
      }
      ci[j] = acc;
    }
  }
}

void row_logsumexp_serial(const double* x, double* out, int m, int n) {
  for (int i = 0; i < m; ++i) {
    const double* xi = x + static_cast<std::size_t>(i) * n;
    double hi = xi[0];
    for (int j = 1; j < n; ++j) hi = xi[j] > hi ? xi[j] : hi;
    if (hi == -std::numeric_limits<double>::infinity()) {
      out[i] = hi;
      continue;
    }
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += std::exp(xi[j] - hi);
    out[i] = hi + std::log(acc);
  }
}

}  // namespace mpctc::kernels
