#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "relugf/kernels.hpp"

using namespace relugf;

namespace {

struct Case {
  std::vector<double> w, b, v, x, coef;
};

Case make_case(std::mt19937_64& rng, std::size_t k, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Case c;
  for (std::size_t j = 0; j < k; ++j) {
    c.w.push_back(g(rng));
    c.b.push_back(g(rng));
    c.v.push_back(g(rng));
  }
  for (std::size_t i = 0; i < n; ++i) {
    c.x.push_back(g(rng));
    c.coef.push_back(g(rng));
  }
  // Put some pairs exactly on their kinks.
  if (k > 1 && n > 1) {
    c.b[0] = -c.w[0] * c.x[0];
    c.w[1] = 0.0;
    c.b[1] = 0.0;
  }
  return c;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Kernels, ActiveTableExists) {
  EXPECT_FALSE(kernels::active().name.empty());
  EXPECT_EQ(kernels::scalar_table().name, "scalar");
}

TEST(Kernels, Avx2BitwiseEqualsScalar) {
  const kernels::KernelTable* avx = kernels::avx2_table();
  if (!avx) GTEST_SKIP() << "AVX2 variant unavailable on this machine";
  const kernels::KernelTable& ref = kernels::scalar_table();
  std::mt19937_64 rng(11);
  // Widths and sizes straddle the vector length and its remainders.
  for (std::size_t k : {1u, 3u, 4u, 5u, 8u, 13u, 64u, 201u}) {
    for (std::size_t n : {1u, 2u, 7u, 33u, 100u}) {
      const Case c = make_case(rng, k, n);
      std::vector<double> o1(n), o2(n);
      ref.forward(c.w.data(), c.b.data(), c.v.data(), k, c.x.data(), n, o1.data());
      avx->forward(c.w.data(), c.b.data(), c.v.data(), k, c.x.data(), n, o2.data());
      EXPECT_TRUE(same_bits(o1, o2)) << "forward k=" << k << " n=" << n;

      for (double kink : {0.0, 0.5, 1.0}) {
        std::vector<double> gw1(k), gb1(k), gv1(k), gw2(k), gb2(k), gv2(k);
        ref.gradient(c.w.data(), c.b.data(), c.v.data(), k, c.x.data(), n, c.coef.data(), kink, gw1.data(),
                     gb1.data(), gv1.data());
        avx->gradient(c.w.data(), c.b.data(), c.v.data(), k, c.x.data(), n, c.coef.data(), kink, gw2.data(),
                      gb2.data(), gv2.data());
        EXPECT_TRUE(same_bits(gw1, gw2) && same_bits(gb1, gb2) && same_bits(gv1, gv2))
            << "gradient k=" << k << " n=" << n << " kink=" << kink;
      }

      std::vector<std::int8_t> p1(n * k), p2(n * k);
      ref.pattern(c.w.data(), c.b.data(), k, c.x.data(), n, p1.data());
      avx->pattern(c.w.data(), c.b.data(), k, c.x.data(), n, p2.data());
      EXPECT_EQ(p1, p2);
    }
  }
}

TEST(Kernels, ScalarMatchesFormula) {
  std::mt19937_64 rng(12);
  const Case c = make_case(rng, 6, 9);
  const auto& ref = kernels::scalar_table();
  std::vector<double> out(9), gw(6), gb(6), gv(6);
  ref.forward(c.w.data(), c.b.data(), c.v.data(), 6, c.x.data(), 9, out.data());
  ref.gradient(c.w.data(), c.b.data(), c.v.data(), 6, c.x.data(), 9, c.coef.data(), 0.5, gw.data(), gb.data(),
               gv.data());
  for (std::size_t i = 0; i < 9; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) s += c.v[j] * std::max(0.0, c.w[j] * c.x[i] + c.b[j]);
    EXPECT_NEAR(out[i], s, 1e-14);
  }
  for (std::size_t j = 0; j < 6; ++j) {
    double ew = 0.0, eb = 0.0, ev = 0.0;
    for (std::size_t i = 0; i < 9; ++i) {
      const double pre = c.w[j] * c.x[i] + c.b[j];
      const double s = pre > 0.0 ? 1.0 : (pre == 0.0 ? 0.5 : 0.0);
      ew += c.coef[i] * s * c.x[i];
      eb += c.coef[i] * s;
      ev += c.coef[i] * std::max(0.0, pre);
    }
    EXPECT_NEAR(gw[j], c.v[j] * ew, 1e-13);
    EXPECT_NEAR(gb[j], c.v[j] * eb, 1e-13);
    EXPECT_NEAR(gv[j], ev, 1e-13);
  }
}
