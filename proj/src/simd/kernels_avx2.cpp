// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "smdris/simd/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace smdris::simd {
namespace {

using Index = std::ptrdiff_t;

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  const __m128d h = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, h));
}

// a_at(r, k) yields the A element that multiplies row r of B at depth k.
template <typename AAt>
inline void tile_4x8(int K, AAt a_at, const double* B, int ldb, double* C, int ldc) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  for (int k = 0; k < K; ++k) {
    const double* b = B + static_cast<Index>(k) * ldb;
    const __m256d b0 = _mm256_loadu_pd(b);
    const __m256d b1 = _mm256_loadu_pd(b + 4);
    __m256d a = _mm256_broadcast_sd(a_at(0, k));
    c00 = _mm256_fmadd_pd(a, b0, c00);
    c01 = _mm256_fmadd_pd(a, b1, c01);
    a = _mm256_broadcast_sd(a_at(1, k));
    c10 = _mm256_fmadd_pd(a, b0, c10);
    c11 = _mm256_fmadd_pd(a, b1, c11);
    a = _mm256_broadcast_sd(a_at(2, k));
    c20 = _mm256_fmadd_pd(a, b0, c20);
    c21 = _mm256_fmadd_pd(a, b1, c21);
    a = _mm256_broadcast_sd(a_at(3, k));
    c30 = _mm256_fmadd_pd(a, b0, c30);
    c31 = _mm256_fmadd_pd(a, b1, c31);
  }
  auto flush = [&](int r, __m256d lo, __m256d hi) {
    double* c = C + static_cast<Index>(r) * ldc;
    _mm256_storeu_pd(c, _mm256_add_pd(_mm256_loadu_pd(c), lo));
    _mm256_storeu_pd(c + 4, _mm256_add_pd(_mm256_loadu_pd(c + 4), hi));
  };
  flush(0, c00, c01);
  flush(1, c10, c11);
  flush(2, c20, c21);
  flush(3, c30, c31);
}

template <typename AAt>
inline void tile_1x8(int K, AAt a_at, const double* B, int ldb, double* C) {
  __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
  for (int k = 0; k < K; ++k) {
    const double* b = B + static_cast<Index>(k) * ldb;
    const __m256d a = _mm256_broadcast_sd(a_at(0, k));
    c0 = _mm256_fmadd_pd(a, _mm256_loadu_pd(b), c0);
    c1 = _mm256_fmadd_pd(a, _mm256_loadu_pd(b + 4), c1);
  }
  _mm256_storeu_pd(C, _mm256_add_pd(_mm256_loadu_pd(C), c0));
  _mm256_storeu_pd(C + 4, _mm256_add_pd(_mm256_loadu_pd(C + 4), c1));
}

// Shared driver for the NN and TN layouts; they differ only in how A is read.
template <typename MakeAAt>
void gemm_b_rows(int M, int N, int K, MakeAAt make_a_at, const double* B, int ldb, double* C,
                 int ldc) {
  const int n8 = N - N % 8;
  for (int j = 0; j < n8; j += 8) {
    int i = 0;
    for (; i + 4 <= M; i += 4) {
      tile_4x8(K, make_a_at(i), B + j, ldb, C + static_cast<Index>(i) * ldc + j, ldc);
    }
    for (; i < M; ++i) {
      tile_1x8(K, make_a_at(i), B + j, ldb, C + static_cast<Index>(i) * ldc + j);
    }
  }
  if (n8 == N) return;
  for (int i = 0; i < M; ++i) {
    auto a_at = make_a_at(i);
    double* c = C + static_cast<Index>(i) * ldc;
    for (int k = 0; k < K; ++k) {
      const double a = *a_at(0, k);
      const double* b = B + static_cast<Index>(k) * ldb;
      for (int j = n8; j < N; ++j) c[j] += a * b[j];
    }
  }
}

void gemm_nn_avx2(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
                  double* C, int ldc) {
  gemm_b_rows(
      M, N, K,
      [=](int i) {
        return [=](int r, int k) { return A + static_cast<Index>(i + r) * lda + k; };
      },
      B, ldb, C, ldc);
}

void gemm_tn_avx2(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
                  double* C, int ldc) {
  gemm_b_rows(
      M, N, K,
      [=](int i) {
        return [=](int r, int k) { return A + static_cast<Index>(k) * lda + i + r; };
      },
      B, ldb, C, ldc);
}

inline double dot_avx2(int K, const double* a, const double* b) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  int k = 0;
  for (; k + 8 <= K; k += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k + 4), _mm256_loadu_pd(b + k + 4), acc1);
  }
  for (; k + 4 <= K; k += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; k < K; ++k) s += a[k] * b[k];
  return s;
}

void gemm_nt_avx2(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
                  double* C, int ldc) {
  const int k4 = K - K % 4;
  int i = 0;
  for (; i + 2 <= M; i += 2) {
    const double* a0 = A + static_cast<Index>(i) * lda;
    const double* a1 = a0 + lda;
    double* c0 = C + static_cast<Index>(i) * ldc;
    double* c1 = c0 + ldc;
    int j = 0;
    for (; j + 4 <= N; j += 4) {
      const double* b0 = B + static_cast<Index>(j) * ldb;
      const double* b1 = b0 + ldb;
      const double* b2 = b1 + ldb;
      const double* b3 = b2 + ldb;
      __m256d s00 = _mm256_setzero_pd(), s01 = _mm256_setzero_pd();
      __m256d s02 = _mm256_setzero_pd(), s03 = _mm256_setzero_pd();
      __m256d s10 = _mm256_setzero_pd(), s11 = _mm256_setzero_pd();
      __m256d s12 = _mm256_setzero_pd(), s13 = _mm256_setzero_pd();
      for (int k = 0; k < k4; k += 4) {
        const __m256d va0 = _mm256_loadu_pd(a0 + k);
        const __m256d va1 = _mm256_loadu_pd(a1 + k);
        __m256d vb = _mm256_loadu_pd(b0 + k);
        s00 = _mm256_fmadd_pd(va0, vb, s00);
        s10 = _mm256_fmadd_pd(va1, vb, s10);
        vb = _mm256_loadu_pd(b1 + k);
        s01 = _mm256_fmadd_pd(va0, vb, s01);
        s11 = _mm256_fmadd_pd(va1, vb, s11);
        vb = _mm256_loadu_pd(b2 + k);
        s02 = _mm256_fmadd_pd(va0, vb, s02);
        s12 = _mm256_fmadd_pd(va1, vb, s12);
        vb = _mm256_loadu_pd(b3 + k);
        s03 = _mm256_fmadd_pd(va0, vb, s03);
        s13 = _mm256_fmadd_pd(va1, vb, s13);
      }
      double r00 = hsum(s00), r01 = hsum(s01), r02 = hsum(s02), r03 = hsum(s03);
      double r10 = hsum(s10), r11 = hsum(s11), r12 = hsum(s12), r13 = hsum(s13);
      for (int k = k4; k < K; ++k) {
        r00 += a0[k] * b0[k];
        r01 += a0[k] * b1[k];
        r02 += a0[k] * b2[k];
        r03 += a0[k] * b3[k];
        r10 += a1[k] * b0[k];
        r11 += a1[k] * b1[k];
        r12 += a1[k] * b2[k];
        r13 += a1[k] * b3[k];
      }
      c0[j] += r00;
      c0[j + 1] += r01;
      c0[j + 2] += r02;
      c0[j + 3] += r03;
      c1[j] += r10;
      c1[j + 1] += r11;
      c1[j + 2] += r12;
      c1[j + 3] += r13;
    }
    for (; j < N; ++j) {
      const double* b = B + static_cast<Index>(j) * ldb;
      c0[j] += dot_avx2(K, a0, b);
      c1[j] += dot_avx2(K, a1, b);
    }
  }
  for (; i < M; ++i) {
    const double* a = A + static_cast<Index>(i) * lda;
    double* c = C + static_cast<Index>(i) * ldc;
    for (int j = 0; j < N; ++j) c[j] += dot_avx2(K, a, B + static_cast<Index>(j) * ldb);
  }
}

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double dot_n_avx2(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum_abs_diff_avx2(std::size_t n, const double* x, const double* y) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_add_pd(acc, _mm256_andnot_pd(sign, d));
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] > y[i] ? x[i] - y[i] : y[i] - x[i];
  return s;
}

double sum_sq_diff_avx2(std::size_t n, const double* x, const double* y) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

constexpr KernelTable kAvx2{Isa::avx2,       "avx2",           gemm_nn_avx2,
                            gemm_tn_avx2,    gemm_nt_avx2,     axpy_avx2,
                            dot_n_avx2,      sum_abs_diff_avx2, sum_sq_diff_avx2};

}  // namespace

const KernelTable* avx2_kernels() { return &kAvx2; }

}  // namespace smdris::simd

#else

namespace smdris::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace smdris::simd

#endif
