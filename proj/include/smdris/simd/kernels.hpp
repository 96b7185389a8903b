#pragma once

// Dense inner-loop kernels with a portable scalar reference and SIMD variants.
//
// Every variant implements the same contract; the active table is chosen once
// at startup from CPU feature detection and may be overridden with the
// SMDRIS_SIMD environment variable ("scalar" or "avx2") or set_isa().
// All matrices are row-major with explicit leading dimensions, and every
// GEMM accumulates into C.

#include <cstddef>
#include <string_view>

namespace smdris::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  const char* name;

  // C[M x N] += A[M x K] * B[K x N]
  void (*gemm_nn)(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
                  double* C, int ldc);
  // C[M x N] += A^T * B, with A stored K x M
  void (*gemm_tn)(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
                  double* C, int ldc);
  // C[M x N] += A * B^T, with B stored N x K
  void (*gemm_nt)(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
                  double* C, int ldc);

  // y += a * x
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // sum |x - y| and sum (x - y)^2
  double (*sum_abs_diff)(std::size_t n, const double* x, const double* y);
  double (*sum_sq_diff)(std::size_t n, const double* x, const double* y);
};

const KernelTable& scalar_kernels();
// Returns nullptr when the variant was not compiled in.
const KernelTable* avx2_kernels();

bool isa_supported(Isa isa);
// Throws std::invalid_argument when the ISA is not supported on this host.
void set_isa(Isa isa);
Isa active_isa();
const KernelTable& kernels();

Isa parse_isa(std::string_view name);
std::string_view isa_name(Isa isa);

}  // namespace smdris::simd
