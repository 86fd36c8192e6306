#pragma once

#include "relugf/kernels.hpp"

namespace relugf::kernels::detail {

void forward_scalar(const double* w, const double* b, const double* v, std::size_t k,
                    const double* x, std::size_t n, double* out);
void gradient_scalar(const double* w, const double* b, const double* v, std::size_t k,
                     const double* x, std::size_t n, const double* coef, double kink_value,
                     double* gw, double* gb, double* gv);
void pattern_scalar(const double* w, const double* b, std::size_t k, const double* x,
                    std::size_t n, std::int8_t* pattern);

#if RELUGF_HAVE_AVX2
void forward_avx2(const double* w, const double* b, const double* v, std::size_t k,
                  const double* x, std::size_t n, double* out);
void gradient_avx2(const double* w, const double* b, const double* v, std::size_t k,
                   const double* x, std::size_t n, const double* coef, double kink_value,
                   double* gw, double* gb, double* gv);
void pattern_avx2(const double* w, const double* b, std::size_t k, const double* x,
                  std::size_t n, std::int8_t* pattern);
#endif

}  // namespace relugf::kernels::detail
