#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "patchmil/random.hpp"
#include "patchmil/simd/kernels.hpp"

using namespace patchmil;
using simd::KernelTable;

namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

// Plain triple loop in double, independent of both kernel tables.
double ref_entry(const std::vector<float>& a, const std::vector<float>& b, std::size_t i, std::size_t j,
                 std::size_t K, int mode, std::size_t M, std::size_t N) {
  double s = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double av = mode == 2 ? a[k * M + i] : a[i * K + k];
    const double bv = mode == 1 ? b[j * K + k] : b[k * N + j];
    s += av * bv;
  }
  return s;
}

void check_gemm(const KernelTable& t, int mode) {
  Rng rng(42 + mode);
  for (std::size_t M : {1u, 3u, 4u, 7u, 17u})
    for (std::size_t N : {1u, 5u, 8u, 16u, 23u, 40u})
      for (std::size_t K : {1u, 2u, 9u, 33u}) {
        const auto a = random_vec(rng, M * K), b = random_vec(rng, K * N);
        std::vector<float> c(M * N, 0.5f);
        const auto c0 = c;
        auto fn = mode == 0 ? t.gemm_nn : mode == 1 ? t.gemm_nt : t.gemm_tn;
        const std::size_t lda = mode == 2 ? M : K, ldb = mode == 1 ? K : N;
        fn(M, N, K, a.data(), lda, b.data(), ldb, c.data(), N, true);
        for (std::size_t i = 0; i < M; ++i)
          for (std::size_t j = 0; j < N; ++j)
            ASSERT_NEAR(c[i * N + j], c0[i * N + j] + ref_entry(a, b, i, j, K, mode, M, N), 1e-4)
                << "mode " << mode << " M" << M << " N" << N << " K" << K;
        fn(M, N, K, a.data(), lda, b.data(), ldb, c.data(), N, false);
        for (std::size_t i = 0; i < M; ++i)
          for (std::size_t j = 0; j < N; ++j) ASSERT_NEAR(c[i * N + j], ref_entry(a, b, i, j, K, mode, M, N), 1e-4);
      }
}

std::vector<const KernelTable*> tables() {
  std::vector<const KernelTable*> out{&simd::scalar_kernels()};
  if (simd::avx2_kernels()) out.push_back(simd::avx2_kernels());
  return out;
}

}  // namespace

TEST(Simd, GemmMatchesReferenceOnEveryLevel) {
  for (const KernelTable* t : tables())
    for (int mode = 0; mode < 3; ++mode) check_gemm(*t, mode);
}

TEST(Simd, Avx2MatchesScalarOnVectorKernels) {
  const KernelTable* v = simd::avx2_kernels();
  if (!v) GTEST_SKIP() << "no AVX2 on this machine";
  const KernelTable& s = simd::scalar_kernels();
  Rng rng(7);
  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 31u, 64u, 1001u}) {
    const auto x = random_vec(rng, n);
    auto y1 = random_vec(rng, n), y2 = y1;
    s.axpy(n, 0.3f, x.data(), y1.data());
    v->axpy(n, 0.3f, x.data(), y2.data());
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-6f);

    EXPECT_NEAR(s.dot(n, x.data(), y1.data()), v->dot(n, x.data(), y1.data()), 1e-4);

    std::vector<float> r1(n), r2(n);
    s.relu_forward(n, x.data(), r1.data());
    v->relu_forward(n, x.data(), r2.data());
    EXPECT_EQ(r1, r2);
    s.relu_backward(n, r1.data(), y1.data(), r1.data());
    v->relu_backward(n, r2.data(), y1.data(), r2.data());
    EXPECT_EQ(r1, r2);

    auto p1 = random_vec(rng, n), p2 = p1;
    std::vector<float> m1(n, 0.f), v1(n, 0.f), m2(n, 0.f), v2(n, 0.f);
    for (int step = 0; step < 3; ++step) {
      s.adam_update(n, p1.data(), x.data(), m1.data(), v1.data(), 1e-3f, 0.9f, 0.999f, 1e-8f);
      v->adam_update(n, p2.data(), x.data(), m2.data(), v2.data(), 1e-3f, 0.9f, 0.999f, 1e-8f);
    }
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(p1[i], p2[i], 1e-6f);
  }
}

TEST(Simd, LevelSelection) {
  EXPECT_TRUE(simd::set_level(simd::Level::Scalar));
  EXPECT_EQ(simd::active_level(), simd::Level::Scalar);
  EXPECT_EQ(simd::kernels().level, simd::Level::Scalar);
  if (simd::avx2_kernels()) {
    EXPECT_TRUE(simd::set_level(simd::Level::Avx2));
    EXPECT_EQ(simd::kernels().level, simd::Level::Avx2);
  } else {
    EXPECT_FALSE(simd::set_level(simd::Level::Avx2));
  }
  EXPECT_EQ(simd::level_name(simd::Level::Scalar), "scalar");
}
