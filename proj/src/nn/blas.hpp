#pragma once

#include <cblas.h>

#include <vector>

namespace gammasense::nn {

// Row-major C = alpha * op(A) * op(B) + beta * C.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda, const float* b,
                 int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha,
              a, lda, b, ldb, beta, c, ldc);
}

// Double precision only backs the gradient checks. The DGEMM kernel OpenBLAS
// 0.3.20 selects on Cooper Lake returns wrong results, so this is a plain loop.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
                 const double* b, int ldb, double beta, double* c, int ldc) {
  std::vector<double> bt;
  if (trans_b) {
    bt.resize(static_cast<std::size_t>(k) * n);
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) bt[static_cast<std::size_t>(p) * n + j] = b[static_cast<std::size_t>(j) * ldb + p];
    b = bt.data();
    ldb = n;
  }
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * ldc;
    for (int j = 0; j < n; ++j) ci[j] = beta == 0.0 ? 0.0 : beta * ci[j];
  }
  auto a_at = [&](int i, int p) {
    return trans_a ? a[static_cast<std::size_t>(p) * lda + i] : a[static_cast<std::size_t>(i) * lda + p];
  };
  auto axpy = [&](int i, int p) {
    const double s = alpha * a_at(i, p);
    if (s == 0.0) return;
    double* ci = c + static_cast<std::size_t>(i) * ldc;
    const double* bp = b + static_cast<std::size_t>(p) * ldb;
    for (int j = 0; j < n; ++j) ci[j] += s * bp[j];
  };
  // Walk A in storage order.
  if (trans_a) {
    for (int p = 0; p < k; ++p)
      for (int i = 0; i < m; ++i) axpy(i, p);
  } else {
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) axpy(i, p);
  }
}

}  // namespace gammasense::nn
