#include "kernels_impl.hpp"

namespace relugf::kernels::detail {

void forward_scalar(const double* w, const double* b, const double* v, std::size_t k,
                    const double* x, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double pre = w[j] * x[i] + b[j];
      acc += v[j] * (pre > 0.0 ? pre : 0.0);
    }
    out[i] = acc;
  }
}

void gradient_scalar(const double* w, const double* b, const double* v, std::size_t k,
                     const double* x, std::size_t n, const double* coef, double kink_value,
                     double* gw, double* gb, double* gv) {
  for (std::size_t j = 0; j < k; ++j) {
    double sw = 0.0;
    double sb = 0.0;
    double sv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double pre = w[j] * x[i] + b[j];
      const double s = pre > 0.0 ? 1.0 : (pre == 0.0 ? kink_value : 0.0);
      const double t = coef[i] * s;
      sw += t * x[i];
      sb += t;
      sv += coef[i] * (pre > 0.0 ? pre : 0.0);
    }
    gw[j] = v[j] * sw;
    gb[j] = v[j] * sb;
    gv[j] = sv;
  }
}

void pattern_scalar(const double* w, const double* b, std::size_t k, const double* x,
                    std::size_t n, std::int8_t* pattern) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double pre = w[j] * x[i] + b[j];
      pattern[i * k + j] = static_cast<std::int8_t>((pre > 0.0) - (pre < 0.0));
    }
  }
}

}  // namespace relugf::kernels::detail
