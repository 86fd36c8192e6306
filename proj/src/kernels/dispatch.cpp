#include <cstdlib>
#include <string_view>

#include "kernels_impl.hpp"

namespace relugf::kernels {

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", detail::forward_scalar, detail::gradient_scalar,
                                 detail::pattern_scalar};
  return table;
}

const KernelTable* avx2_table() {
#if RELUGF_HAVE_AVX2
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") != 0;
  }();
  if (!supported) return nullptr;
  static const KernelTable table{"avx2", detail::forward_avx2, detail::gradient_avx2,
                                 detail::pattern_avx2};
  return &table;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable& chosen = []() -> const KernelTable& {
    const char* env = std::getenv("RELUGF_KERNELS");
    if (env != nullptr && std::string_view(env) == "scalar") return scalar_table();
    if (const KernelTable* t = avx2_table()) return *t;
    return scalar_table();
  }();
  return chosen;
}

}  // namespace relugf::kernels
