#pragma once

#include <cstddef>

namespace score::nn {

enum class GemmBackend { blas, plain };

// Process-wide kernel selection. `blas` silently falls back to `plain`
// in builds without a BLAS library.
void set_gemm_backend(GemmBackend backend);
GemmBackend gemm_backend();
bool blas_available();

// Row-major C[m,n] = alpha * op(A) * op(B) + beta * C.
// op(A) is A[m,k] (or A[k,m] when trans_a), leading dimensions as in BLAS.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

}  // namespace score::nn
