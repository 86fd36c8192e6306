// AVX2 variants of the objective kernels. Compiled with -mavx2 and without
// FMA contraction; must stay bitwise identical to kernels_scalar.cpp.

#include <immintrin.h>

#include "kernels_impl.hpp"

namespace relugf::kernels::detail {

void forward_avx2(const double* w, const double* b, const double* v, std::size_t k,
                  const double* x, std::size_t n, double* out) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xi = _mm256_loadu_pd(x + i);
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t j = 0; j < k; ++j) {
      const __m256d pre = _mm256_add_pd(_mm256_mul_pd(_mm256_set1_pd(w[j]), xi),
                                        _mm256_set1_pd(b[j]));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(v[j]), _mm256_max_pd(pre, zero)));
    }
    _mm256_storeu_pd(out + i, acc);
  }
  if (i < n) forward_scalar(w, b, v, k, x + i, n - i, out + i);
}

void gradient_avx2(const double* w, const double* b, const double* v, std::size_t k,
                   const double* x, std::size_t n, const double* coef, double kink_value,
                   double* gw, double* gb, double* gv) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d kink = _mm256_set1_pd(kink_value);
  std::size_t j = 0;
  for (; j + 4 <= k; j += 4) {
    const __m256d wj = _mm256_loadu_pd(w + j);
    const __m256d bj = _mm256_loadu_pd(b + j);
    __m256d sw = zero;
    __m256d sb = zero;
    __m256d sv = zero;
    for (std::size_t i = 0; i < n; ++i) {
      const __m256d xi = _mm256_set1_pd(x[i]);
      const __m256d ci = _mm256_set1_pd(coef[i]);
      const __m256d pre = _mm256_add_pd(_mm256_mul_pd(wj, xi), bj);
      const __m256d gt = _mm256_cmp_pd(pre, zero, _CMP_GT_OQ);
      const __m256d eq = _mm256_cmp_pd(pre, zero, _CMP_EQ_OQ);
      const __m256d s = _mm256_or_pd(_mm256_and_pd(gt, one), _mm256_and_pd(eq, kink));
      const __m256d t = _mm256_mul_pd(ci, s);
      sw = _mm256_add_pd(sw, _mm256_mul_pd(t, xi));
      sb = _mm256_add_pd(sb, t);
      sv = _mm256_add_pd(sv, _mm256_mul_pd(ci, _mm256_max_pd(pre, zero)));
    }
    const __m256d vj = _mm256_loadu_pd(v + j);
    _mm256_storeu_pd(gw + j, _mm256_mul_pd(vj, sw));
    _mm256_storeu_pd(gb + j, _mm256_mul_pd(vj, sb));
    _mm256_storeu_pd(gv + j, sv);
  }
  if (j < k) {
    gradient_scalar(w + j, b + j, v + j, k - j, x, n, coef, kink_value, gw + j, gb + j, gv + j);
  }
}

void pattern_avx2(const double* w, const double* b, std::size_t k, const double* x,
                  std::size_t n, std::int8_t* pattern) {
  const __m256d zero = _mm256_setzero_pd();
  for (std::size_t i = 0; i < n; ++i) {
    const __m256d xi = _mm256_set1_pd(x[i]);
    std::int8_t* row = pattern + i * k;
    std::size_t j = 0;
    for (; j + 4 <= k; j += 4) {
      const __m256d pre =
          _mm256_add_pd(_mm256_mul_pd(_mm256_loadu_pd(w + j), xi), _mm256_loadu_pd(b + j));
      const int pos = _mm256_movemask_pd(_mm256_cmp_pd(pre, zero, _CMP_GT_OQ));
      const int neg = _mm256_movemask_pd(_mm256_cmp_pd(pre, zero, _CMP_LT_OQ));
      for (int l = 0; l < 4; ++l) {
        row[j + l] = static_cast<std::int8_t>(((pos >> l) & 1) - ((neg >> l) & 1));
      }
    }
    for (; j < k; ++j) {
      const double pre = w[j] * x[i] + b[j];
      row[j] = static_cast<std::int8_t>((pre > 0.0) - (pre < 0.0));
    }
  }
}

}  // namespace relugf::kernels::detail
