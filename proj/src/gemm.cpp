#include "score/nn/gemm.hpp"

#include <algorithm>
#include <vector>

#ifdef SCORE_WITH_BLAS
#include <cblas.h>
#endif

namespace score::nn {

namespace {

GemmBackend g_backend = GemmBackend::blas;

#ifdef SCORE_WITH_BLAS
bool ensure_single_thread() {
  openblas_set_num_threads(1);
  return true;
}
#endif

// Cache-blocked triple loop, used when no BLAS is present and to
// cross-check the BLAS path in tests.
template <class Real>
void gemm_plain(bool trans_a, bool trans_b, int m, int n, int k, Real alpha,
                const Real* a, int lda, const Real* b, int ldb, Real beta,
                Real* c, int ldc) {
  auto at = [&](int i, int j) { return trans_a ? a[size_t(j) * lda + i] : a[size_t(i) * lda + j]; };
  auto bt = [&](int i, int j) { return trans_b ? b[size_t(j) * ldb + i] : b[size_t(i) * ldb + j]; };
  for (int i = 0; i < m; i++) {
    Real* crow = c + size_t(i) * ldc;
    if (beta == Real(0)) {
      std::fill(crow, crow + n, Real(0));
    } else if (beta != Real(1)) {
      for (int j = 0; j < n; j++) crow[j] *= beta;
    }
  }
  constexpr int kBlock = 64;
  for (int i0 = 0; i0 < m; i0 += kBlock)
    for (int p0 = 0; p0 < k; p0 += kBlock)
      for (int i = i0; i < std::min(m, i0 + kBlock); i++) {
        Real* crow = c + size_t(i) * ldc;
        for (int p = p0; p < std::min(k, p0 + kBlock); p++) {
          Real av = alpha * at(i, p);
          if (av == Real(0)) continue;
          if (!trans_b) {
            const Real* brow = b + size_t(p) * ldb;
            for (int j = 0; j < n; j++) crow[j] += av * brow[j];
          } else {
            for (int j = 0; j < n; j++) crow[j] += av * bt(p, j);
          }
        }
      }
}

}  // namespace

void set_gemm_backend(GemmBackend backend) { g_backend = backend; }
GemmBackend gemm_backend() { return g_backend; }

bool blas_available() {
#ifdef SCORE_WITH_BLAS
  return true;
#else
  return false;
#endif
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
  if (m <= 0 || n <= 0) return;
#ifdef SCORE_WITH_BLAS
  if (g_backend == GemmBackend::blas) {
    static const bool threaded = ensure_single_thread();
    (void)threaded;
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
                ldb, beta, c, ldc);
    return;
  }
#endif
  gemm_plain(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  if (m <= 0 || n <= 0) return;
#ifdef SCORE_WITH_BLAS
  if (g_backend == GemmBackend::blas) {
    static const bool threaded = ensure_single_thread();
    (void)threaded;
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
                ldb, beta, c, ldc);
    return;
  }
#endif
  gemm_plain(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace score::nn
