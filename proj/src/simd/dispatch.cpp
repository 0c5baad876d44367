#include <atomic>
#include <cstdlib>
#include <string_view>

#include "patchmil/simd/kernels.hpp"

namespace patchmil::simd {

#ifdef PATCHMIL_HAVE_AVX2
const KernelTable& avx2_kernel_table();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(PATCHMIL_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* resolve_default() {
  if (const char* env = std::getenv("PATCHMIL_SIMD")) {
    if (std::string_view(env) == "scalar") return &scalar_kernels();
  }
  if (const KernelTable* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{resolve_default()};
  return table;
}

}  // namespace

const KernelTable* avx2_kernels() {
#ifdef PATCHMIL_HAVE_AVX2
  static const bool ok = cpu_has_avx2();
  return ok ? &avx2_kernel_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& kernels() { return *active().load(std::memory_order_acquire); }

bool set_level(Level level) {
  const KernelTable* t = level == Level::Scalar ? &scalar_kernels() : avx2_kernels();
  if (t == nullptr) return false;
  active().store(t, std::memory_order_release);
  return true;
}

Level active_level() { return kernels().level; }

std::string_view level_name(Level level) {
  switch (level) {
    case Level::Scalar:
      return "scalar";
    case Level::Avx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace patchmil::simd
