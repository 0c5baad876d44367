#include <cmath>

#include "patchmil/simd/kernels.hpp"

namespace patchmil::simd {
namespace {

void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
             const float* B, std::size_t ldb, float* C, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    float* c = C + i * ldc;
    if (!accumulate)
      for (std::size_t j = 0; j < N; ++j) c[j] = 0.0f;
    for (std::size_t k = 0; k < K; ++k) {
      const float a = A[i * lda + k];
      const float* b = B + k * ldb;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
             const float* B, std::size_t ldb, float* C, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      float s = 0.0f;
      for (std::size_t k = 0; k < K; ++k) s += A[i * lda + k] * B[j * ldb + k];
      C[i * ldc + j] = accumulate ? C[i * ldc + j] + s : s;
    }
  }
}

void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
             const float* B, std::size_t ldb, float* C, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    float* c = C + i * ldc;
    if (!accumulate)
      for (std::size_t j = 0; j < N; ++j) c[j] = 0.0f;
    for (std::size_t k = 0; k < K; ++k) {
      const float a = A[k * lda + i];
      const float* b = B + k * ldb;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

void axpy(std::size_t n, float a, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

float dot(std::size_t n, const float* x, const float* y) {
  float s = 0.0f;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void relu_forward(std::size_t n, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(std::size_t n, const float* y, const float* dy, float* dx) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

void adam_update(std::size_t n, float* param, const float* grad, float* m, float* v, float step,
                 float beta1, float beta2, float eps) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * grad[i] * grad[i];
    param[i] -= step * m[i] / (std::sqrt(v[i]) + eps);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Level::Scalar, gemm_nn,      gemm_nt,       gemm_tn,    axpy,
                                 dot,           relu_forward, relu_backward, adam_update};
  return table;
}

}  // namespace patchmil::simd
