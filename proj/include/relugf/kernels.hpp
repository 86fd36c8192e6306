#pragma once

// Data-parallel inner loops of the training objective.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant picked at runtime. Both variants perform the same floating-point
// operations in the same order (no FMA contraction, no reassociation), so
// their results are bitwise identical; tests/unit/test_kernels.cpp checks it.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace relugf::kernels {

// out[i] = sum_j v[j] * max(0, w[j] * x[i] + b[j]), summed in j order.
using ForwardFn = void (*)(const double* w, const double* b, const double* v, std::size_t k,
                           const double* x, std::size_t n, double* out);

// Given per-example coefficients c[i] (= dL/dPhi(x_i)):
//   gw[j] = v[j] * sum_i c[i] * s[i][j] * x[i]
//   gb[j] = v[j] * sum_i c[i] * s[i][j]
//   gv[j] = sum_i c[i] * max(0, pre[i][j])
// with s = 1 for pre > 0, kink_value for pre == 0, and 0 otherwise.
using GradientFn = void (*)(const double* w, const double* b, const double* v, std::size_t k,
                            const double* x, std::size_t n, const double* coef,
                            double kink_value, double* gw, double* gb, double* gv);

// pattern[i * k + j] = sign(w[j] * x[i] + b[j]) in {-1, 0, 1}.
using PatternFn = void (*)(const double* w, const double* b, std::size_t k, const double* x,
                           std::size_t n, std::int8_t* pattern);

struct KernelTable {
  std::string_view name;
  ForwardFn forward;
  GradientFn gradient;
  PatternFn pattern;
};

const KernelTable& scalar_table();

/// nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2.
const KernelTable* avx2_table();

/// The table used by the library. Chosen once from CPU features; the
/// environment variable RELUGF_KERNELS=scalar forces the reference path.
const KernelTable& active();

}  // namespace relugf::kernels
