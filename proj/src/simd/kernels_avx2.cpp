// Compiled with -mavx2 -mfma. Only reached through the dispatch table after a
// CPUID check, so nothing here may be called from generic code directly.

#include <immintrin.h>

#include <cmath>

#include "patchmil/simd/kernels.hpp"

namespace patchmil::simd {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

// Shared body of NN and TN: both stream rows of B and broadcast one element
// of A per (row, k). TransA selects how A is addressed.
template <bool TransA>
void gemm_xn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
             const float* B, std::size_t ldb, float* C, std::size_t ldc, bool accumulate) {
  auto a_at = [&](std::size_t i, std::size_t k) -> float {
    return TransA ? A[k * lda + i] : A[i * lda + k];
  };
  if (!accumulate) {
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) C[i * ldc + j] = 0.0f;
  }

  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    float* c0 = C + (i + 0) * ldc;
    float* c1 = C + (i + 1) * ldc;
    float* c2 = C + (i + 2) * ldc;
    float* c3 = C + (i + 3) * ldc;
    std::size_t j = 0;
    for (; j + 16 <= N; j += 16) {
      __m256 r00 = _mm256_loadu_ps(c0 + j), r01 = _mm256_loadu_ps(c0 + j + 8);
      __m256 r10 = _mm256_loadu_ps(c1 + j), r11 = _mm256_loadu_ps(c1 + j + 8);
      __m256 r20 = _mm256_loadu_ps(c2 + j), r21 = _mm256_loadu_ps(c2 + j + 8);
      __m256 r30 = _mm256_loadu_ps(c3 + j), r31 = _mm256_loadu_ps(c3 + j + 8);
      for (std::size_t k = 0; k < K; ++k) {
        const float* b = B + k * ldb + j;
        const __m256 b0 = _mm256_loadu_ps(b);
        const __m256 b1 = _mm256_loadu_ps(b + 8);
        __m256 a = _mm256_set1_ps(a_at(i + 0, k));
        r00 = _mm256_fmadd_ps(a, b0, r00);
        r01 = _mm256_fmadd_ps(a, b1, r01);
        a = _mm256_set1_ps(a_at(i + 1, k));
        r10 = _mm256_fmadd_ps(a, b0, r10);
        r11 = _mm256_fmadd_ps(a, b1, r11);
        a = _mm256_set1_ps(a_at(i + 2, k));
        r20 = _mm256_fmadd_ps(a, b0, r20);
        r21 = _mm256_fmadd_ps(a, b1, r21);
        a = _mm256_set1_ps(a_at(i + 3, k));
        r30 = _mm256_fmadd_ps(a, b0, r30);
        r31 = _mm256_fmadd_ps(a, b1, r31);
      }
      _mm256_storeu_ps(c0 + j, r00), _mm256_storeu_ps(c0 + j + 8, r01);
      _mm256_storeu_ps(c1 + j, r10), _mm256_storeu_ps(c1 + j + 8, r11);
      _mm256_storeu_ps(c2 + j, r20), _mm256_storeu_ps(c2 + j + 8, r21);
      _mm256_storeu_ps(c3 + j, r30), _mm256_storeu_ps(c3 + j + 8, r31);
    }
    for (; j + 8 <= N; j += 8) {
      __m256 r0 = _mm256_loadu_ps(c0 + j), r1 = _mm256_loadu_ps(c1 + j);
      __m256 r2 = _mm256_loadu_ps(c2 + j), r3 = _mm256_loadu_ps(c3 + j);
      for (std::size_t k = 0; k < K; ++k) {
        const __m256 b = _mm256_loadu_ps(B + k * ldb + j);
        r0 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i + 0, k)), b, r0);
        r1 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i + 1, k)), b, r1);
        r2 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i + 2, k)), b, r2);
        r3 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i + 3, k)), b, r3);
      }
      _mm256_storeu_ps(c0 + j, r0), _mm256_storeu_ps(c1 + j, r1);
      _mm256_storeu_ps(c2 + j, r2), _mm256_storeu_ps(c3 + j, r3);
    }
    for (; j < N; ++j) {
      for (std::size_t r = 0; r < 4; ++r) {
        float s = C[(i + r) * ldc + j];
        for (std::size_t k = 0; k < K; ++k) s += a_at(i + r, k) * B[k * ldb + j];
        C[(i + r) * ldc + j] = s;
      }
    }
  }
  for (; i < M; ++i) {
    float* c = C + i * ldc;
    std::size_t j = 0;
    for (; j + 8 <= N; j += 8) {
      __m256 r = _mm256_loadu_ps(c + j);
      for (std::size_t k = 0; k < K; ++k)
        r = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i, k)), _mm256_loadu_ps(B + k * ldb + j), r);
      _mm256_storeu_ps(c + j, r);
    }
    for (; j < N; ++j) {
      float s = c[j];
      for (std::size_t k = 0; k < K; ++k) s += a_at(i, k) * B[k * ldb + j];
      c[j] = s;
    }
  }
}

void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
             const float* B, std::size_t ldb, float* C, std::size_t ldc, bool accumulate) {
  gemm_xn<false>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
             const float* B, std::size_t ldb, float* C, std::size_t ldc, bool accumulate) {
  gemm_xn<true>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

inline float dot_tail(std::size_t k0, std::size_t K, const float* a, const float* b) {
  float s = 0.0f;
  for (std::size_t k = k0; k < K; ++k) s += a[k] * b[k];
  return s;
}

void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
             const float* B, std::size_t ldb, float* C, std::size_t ldc, bool accumulate) {
  const std::size_t kv = K & ~std::size_t{7};
  for (std::size_t i = 0; i < M; ++i) {
    const float* a = A + i * lda;
    float* c = C + i * ldc;
    std::size_t j = 0;
    for (; j + 4 <= N; j += 4) {
      const float* b0 = B + (j + 0) * ldb;
      const float* b1 = B + (j + 1) * ldb;
      const float* b2 = B + (j + 2) * ldb;
      const float* b3 = B + (j + 3) * ldb;
      __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
      __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
      for (std::size_t k = 0; k < kv; k += 8) {
        const __m256 av = _mm256_loadu_ps(a + k);
        s0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + k), s0);
        s1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + k), s1);
        s2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + k), s2);
        s3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + k), s3);
      }
      const float r0 = hsum(s0) + dot_tail(kv, K, a, b0);
      const float r1 = hsum(s1) + dot_tail(kv, K, a, b1);
      const float r2 = hsum(s2) + dot_tail(kv, K, a, b2);
      const float r3 = hsum(s3) + dot_tail(kv, K, a, b3);
      if (accumulate) {
        c[j] += r0, c[j + 1] += r1, c[j + 2] += r2, c[j + 3] += r3;
      } else {
        c[j] = r0, c[j + 1] = r1, c[j + 2] = r2, c[j + 3] = r3;
      }
    }
    for (; j < N; ++j) {
      const float* b = B + j * ldb;
      __m256 s = _mm256_setzero_ps();
      for (std::size_t k = 0; k < kv; k += 8)
        s = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), s);
      const float r = hsum(s) + dot_tail(kv, K, a, b);
      c[j] = accumulate ? c[j] + r : r;
    }
  }
}

void axpy(std::size_t n, float a, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

float dot(std::size_t n, const float* x, const float* y) {
  __m256 s = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) s = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s);
  return hsum(s) + dot_tail(i, n, x, y);
}

void relu_forward(std::size_t n, const float* x, float* y) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(std::size_t n, const float* y, const float* dy, float* dx) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(y + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

void adam_update(std::size_t n, float* param, const float* grad, float* m, float* v, float step,
                 float beta1, float beta2, float eps) {
  const __m256 b1 = _mm256_set1_ps(beta1), nb1 = _mm256_set1_ps(1.0f - beta1);
  const __m256 b2 = _mm256_set1_ps(beta2), nb2 = _mm256_set1_ps(1.0f - beta2);
  const __m256 st = _mm256_set1_ps(step), ep = _mm256_set1_ps(eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    const __m256 mi = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(nb1, g));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                                    _mm256_mul_ps(nb2, _mm256_mul_ps(g, g)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 upd = _mm256_div_ps(_mm256_mul_ps(st, mi), _mm256_add_ps(_mm256_sqrt_ps(vi), ep));
    _mm256_storeu_ps(param + i, _mm256_sub_ps(_mm256_loadu_ps(param + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * grad[i] * grad[i];
    param[i] -= step * m[i] / (std::sqrt(v[i]) + eps);
  }
}

}  // namespace

const KernelTable& avx2_kernel_table() {
  static const KernelTable table{Level::Avx2, gemm_nn,      gemm_nt,       gemm_tn,    axpy,
                                 dot,         relu_forward, relu_backward, adam_update};
  return table;
}

}  // namespace patchmil::simd
