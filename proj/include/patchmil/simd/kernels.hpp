#pragma once
// Data-parallel inner loops used by the network layers and the optimizer.
//
// Every kernel has a scalar reference implementation. Vectorized variants
// (currently AVX2+FMA on x86-64) are selected once at startup from the CPU
// feature bits; PATCHMIL_SIMD=scalar in the environment forces the reference
// path. All matrices are row-major float32.

#include <cstddef>
#include <string_view>

namespace patchmil::simd {

enum class Level { Scalar, Avx2 };

struct KernelTable {
  Level level;

  // C[M,N] (+)= A[M,K] * B[K,N]
  void (*gemm_nn)(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                  const float* B, std::size_t ldb, float* C, std::size_t ldc, bool accumulate);
  // C[M,N] (+)= A[M,K] * B[N,K]^T
  void (*gemm_nt)(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                  const float* B, std::size_t ldb, float* C, std::size_t ldc, bool accumulate);
  // C[M,N] (+)= A[K,M]^T * B[K,N]
  void (*gemm_tn)(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                  const float* B, std::size_t ldb, float* C, std::size_t ldc, bool accumulate);

  // y += a * x
  void (*axpy)(std::size_t n, float a, const float* x, float* y);
  float (*dot)(std::size_t n, const float* x, const float* y);
  // y = max(x, 0)
  void (*relu_forward)(std::size_t n, const float* x, float* y);
  // dx = dy where y > 0, else 0
  void (*relu_backward)(std::size_t n, const float* y, const float* dy, float* dx);
  // In-place Adam update with bias-corrected step size `step`.
  void (*adam_update)(std::size_t n, float* param, const float* grad, float* m, float* v,
                      float step, float beta1, float beta2, float eps);
};

const KernelTable& scalar_kernels();
// nullptr when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

// The table used by the library. Resolved on first call.
const KernelTable& kernels();

// Forces a level (tests and benchmarks). Returns false when unsupported.
bool set_level(Level level);
Level active_level();
std::string_view level_name(Level level);

}  // namespace patchmil::simd
