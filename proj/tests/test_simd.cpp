#include <doctest.h>

#include <cmath>
#include <vector>

#include "smdris/autograd.hpp"
#include "smdris/simd/kernels.hpp"
#include "test_util.hpp"

using namespace smdris;
using smdris::simd::Isa;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
  }
  return worst;
}

// Restores the process-wide ISA when a test case ends.
struct IsaScope {
  Isa saved = simd::active_isa();
  ~IsaScope() { simd::set_isa(saved); }
};

}  // namespace

TEST_CASE("scalar gemm variants agree with a naive triple loop") {
  const auto& k = simd::scalar_kernels();
  const int M = 5, N = 7, K = 3;
  const auto A = random_vec(M * K, 1), B = random_vec(K * N, 2);
  std::vector<double> C(M * N, 0.5), want(M * N, 0.5);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j)
      for (int p = 0; p < K; ++p) want[i * N + j] += A[i * K + p] * B[p * N + j];
  k.gemm_nn(M, N, K, A.data(), K, B.data(), N, C.data(), N);
  CHECK(max_rel(C, want) < 1e-14);

  // A^T stored K x M
  std::vector<double> At(K * M);
  for (int i = 0; i < M; ++i)
    for (int p = 0; p < K; ++p) At[p * M + i] = A[i * K + p];
  std::vector<double> C2(M * N, 0.5);
  k.gemm_tn(M, N, K, At.data(), M, B.data(), N, C2.data(), N);
  CHECK(max_rel(C2, want) < 1e-14);

  // B^T stored N x K
  std::vector<double> Bt(N * K);
  for (int p = 0; p < K; ++p)
    for (int j = 0; j < N; ++j) Bt[j * K + p] = B[p * N + j];
  std::vector<double> C3(M * N, 0.5);
  k.gemm_nt(M, N, K, A.data(), K, Bt.data(), K, C3.data(), N);
  CHECK(max_rel(C3, want) < 1e-14);
}

TEST_CASE("avx2 kernels match the scalar reference on ragged shapes") {
  const simd::KernelTable* v = simd::avx2_kernels();
  if (v == nullptr || !simd::isa_supported(Isa::avx2)) {
    MESSAGE("avx2 variant unavailable on this host; skipping");
    return;
  }
  const auto& s = simd::scalar_kernels();
  std::uint64_t seed = 10;
  for (int M : {1, 3, 4, 5, 9})
    for (int N : {1, 7, 8, 9, 17, 33})
      for (int K : {1, 2, 5, 16}) {
        CAPTURE(M);
        CAPTURE(N);
        CAPTURE(K);
        const int lda = K + 3, ldb = N + 2, ldc = N + 1;
        const auto A = random_vec(static_cast<std::size_t>(M) * lda, ++seed);
        const auto B = random_vec(static_cast<std::size_t>(K) * ldb, ++seed);
        const auto C0 = random_vec(static_cast<std::size_t>(M) * ldc, ++seed);
        auto c1 = C0, c2 = C0;
        s.gemm_nn(M, N, K, A.data(), lda, B.data(), ldb, c1.data(), ldc);
        v->gemm_nn(M, N, K, A.data(), lda, B.data(), ldb, c2.data(), ldc);
        CHECK(max_rel(c1, c2) < 1e-13);

        const int ldat = M + 2;
        const auto At = random_vec(static_cast<std::size_t>(K) * ldat, ++seed);
        c1 = C0;
        c2 = C0;
        s.gemm_tn(M, N, K, At.data(), ldat, B.data(), ldb, c1.data(), ldc);
        v->gemm_tn(M, N, K, At.data(), ldat, B.data(), ldb, c2.data(), ldc);
        CHECK(max_rel(c1, c2) < 1e-13);

        const int ldbt = K + 1;
        const auto Bt = random_vec(static_cast<std::size_t>(N) * ldbt, ++seed);
        c1 = C0;
        c2 = C0;
        s.gemm_nt(M, N, K, A.data(), lda, Bt.data(), ldbt, c1.data(), ldc);
        v->gemm_nt(M, N, K, A.data(), lda, Bt.data(), ldbt, c2.data(), ldc);
        CHECK(max_rel(c1, c2) < 1e-13);
      }

  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 17u, 1000u}) {
    CAPTURE(n);
    const auto x = random_vec(n, ++seed), y0 = random_vec(n, ++seed);
    auto y1 = y0, y2 = y0;
    s.axpy(n, 0.37, x.data(), y1.data());
    v->axpy(n, 0.37, x.data(), y2.data());
    CHECK(max_rel(y1, y2) < 1e-15);
    CHECK(s.dot(n, x.data(), y0.data()) == doctest::Approx(v->dot(n, x.data(), y0.data())).epsilon(1e-13));
    CHECK(s.sum_abs_diff(n, x.data(), y0.data()) ==
          doctest::Approx(v->sum_abs_diff(n, x.data(), y0.data())).epsilon(1e-13));
    CHECK(s.sum_sq_diff(n, x.data(), y0.data()) ==
          doctest::Approx(v->sum_sq_diff(n, x.data(), y0.data())).epsilon(1e-13));
  }
}

TEST_CASE("convolution forward and backward agree across dispatch variants") {
  if (!simd::isa_supported(Isa::avx2)) return;
  IsaScope scope;
  const Tensor x = testing::random_tensor({2, 5, 11, 9}, 3, -1, 1);
  const Tensor w = testing::random_tensor({7, 5, 3, 3}, 4, -0.3, 0.3);
  const Tensor bias = testing::random_tensor({1, 7, 1, 1}, 5, -0.1, 0.1);
  auto run = [&](Isa isa) {
    simd::set_isa(isa);
    Var xv(x, true), wv(w, true), bv(bias, true);
    Var y = conv2d(xv, wv, bv, {2, 1, 1});
    sum_all(mul(y, y)).backward();
    return std::vector<Tensor>{y.value(), xv.grad(), wv.grad(), bv.grad()};
  };
  const auto a = run(Isa::scalar);
  const auto b = run(Isa::avx2);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(max_abs_diff(a[i], b[i]) < 1e-12);
}

TEST_CASE("isa selection parses names and rejects unknown ones") {
  CHECK(simd::parse_isa("scalar") == Isa::scalar);
  CHECK(simd::parse_isa("avx2") == Isa::avx2);
  CHECK_THROWS_AS(simd::parse_isa("neon"), std::invalid_argument);
  CHECK(simd::isa_name(Isa::scalar) == "scalar");
  IsaScope scope;
  simd::set_isa(Isa::scalar);
  CHECK(simd::active_isa() == Isa::scalar);
  CHECK(simd::kernels().isa == Isa::scalar);
}
