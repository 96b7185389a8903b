#include "smdris/simd/kernels.hpp"

namespace smdris::simd {
namespace {

void gemm_nn_scalar(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
                    double* C, int ldc) {
  for (int i = 0; i < M; ++i) {
    double* c = C + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int k = 0; k < K; ++k) {
      const double a = A[static_cast<std::ptrdiff_t>(i) * lda + k];
      const double* b = B + static_cast<std::ptrdiff_t>(k) * ldb;
      for (int j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

void gemm_tn_scalar(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
                    double* C, int ldc) {
  for (int k = 0; k < K; ++k) {
    const double* a = A + static_cast<std::ptrdiff_t>(k) * lda;
    const double* b = B + static_cast<std::ptrdiff_t>(k) * ldb;
    for (int i = 0; i < M; ++i) {
      const double ai = a[i];
      double* c = C + static_cast<std::ptrdiff_t>(i) * ldc;
      for (int j = 0; j < N; ++j) c[j] += ai * b[j];
    }
  }
}

void gemm_nt_scalar(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
                    double* C, int ldc) {
  for (int i = 0; i < M; ++i) {
    const double* a = A + static_cast<std::ptrdiff_t>(i) * lda;
    for (int j = 0; j < N; ++j) {
      const double* b = B + static_cast<std::ptrdiff_t>(j) * ldb;
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += a[k] * b[k];
      C[static_cast<std::ptrdiff_t>(i) * ldc + j] += s;
    }
  }
}

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum_abs_diff_scalar(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] > y[i] ? x[i] - y[i] : y[i] - x[i];
  return s;
}

double sum_sq_diff_scalar(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

constexpr KernelTable kScalar{Isa::scalar,        "scalar",           gemm_nn_scalar,
                              gemm_tn_scalar,     gemm_nt_scalar,     axpy_scalar,
                              dot_scalar,         sum_abs_diff_scalar, sum_sq_diff_scalar};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace smdris::simd
