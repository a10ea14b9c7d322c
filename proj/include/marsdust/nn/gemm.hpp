// Row-major sgemm wrapper over the system BLAS.
#pragma once

#include <cblas.h>

#include "marsdust/common.hpp"

namespace marsdust::nn {

// C(M x N) = alpha * op(A) * op(B) + beta * C, all row-major contiguous.
// op(A) is M x K, op(B) is K x N; leading dims are the physical row widths.
inline void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                  int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// Convenience: contiguous operands, leading dims inferred from logical shapes.
inline void matmul(bool trans_a, bool trans_b, int m, int n, int k, const float* a,
                   const float* b, float* c, float alpha = 1.f, float beta = 0.f) {
  sgemm(trans_a, trans_b, m, n, k, alpha, a, trans_a ? m : k, b, trans_b ? k : n, beta, c, n);
}

}  // namespace marsdust::nn
