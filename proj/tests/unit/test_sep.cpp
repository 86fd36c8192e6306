#include <gtest/gtest.h>

#include <cmath>

#include "relugf/sep.hpp"

using namespace relugf;

namespace {

const Dataset kTwo = make_dataset({-0.5, 0.5}, {1, -1});

// Kinks at -0.9, -0.6, -0.3, 0.6, 0.75, 0.9, then four neurons active on all
// data with breakpoints at -3, -2, 2 and 3.
Params fixture(bool with_all_active = true) {
  std::vector<double> w{1, 1, 1, 1, 1, 1}, b{0.9, 0.6, 0.3, -0.6, -0.75, -0.9};
  if (with_all_active) {
    w.insert(w.end(), {1, 1, -1, -1});
    b.insert(b.end(), {2, 3, 2, 3});
  }
  return Params(w, b, std::vector<double>(w.size(), 0.1));
}

}  // namespace

TEST(Separability, HandBuiltFixture) {
  const SeparabilityResult s = check_separability(fixture(), kTwo);
  ASSERT_TRUE(s.separable) << s.message;
  ASSERT_EQ(s.witnesses.size(), 2u);
  EXPECT_DOUBLE_EQ(s.witnesses[0].beta[0], -0.9);
  EXPECT_DOUBLE_EQ(s.witnesses[0].beta[1], -0.6);
  EXPECT_DOUBLE_EQ(s.witnesses[0].beta[2], -0.3);
  EXPECT_DOUBLE_EQ(s.witnesses[1].beta[1], 0.6);
  EXPECT_EQ(s.all_active.size(), 4u);
  EXPECT_DOUBLE_EQ(s.constants.m, 1.0);
  EXPECT_DOUBLE_EQ(s.constants.M, 3.0);
  EXPECT_NEAR(s.constants.q, 0.3, 1e-12);
  EXPECT_DOUBLE_EQ(s.constants.Q, 3.0);
  EXPECT_DOUBLE_EQ(s.constants.gamma, 1.0);
  EXPECT_GT(grad_lower_bound(s.constants, 2), 0.0);
}

TEST(Separability, NegativeFixtures) {
  const SeparabilityResult a = check_separability(fixture(false), kTwo);
  EXPECT_FALSE(a.separable);
  EXPECT_EQ(a.failed_item, 2);
  const SeparabilityResult b = check_separability(Params({1, 1}, {0.9, 0.6}, {1, 1}), kTwo);
  EXPECT_FALSE(b.separable);
  EXPECT_NE(b.failed_item, 0);
  EXPECT_FALSE(b.message.empty());
}

TEST(Separability, GradLowerBound) {
  SeparabilityConstants c{1, 1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(grad_lower_bound(c, 1), 1.0 / 259200.0);
  c.M = 10.0;
  const double base = grad_lower_bound(c, 3);
  c.m = 2.0;
  EXPECT_NEAR(grad_lower_bound(c, 3) / base, 64.0, 1e-12);
  c.m = 1.0;
  EXPECT_NEAR(grad_lower_bound(c, 6) / base, 1.0 / 16.0, 1e-15);
}

TEST(Masking, SmallCases) {
  const MaskingReport one = masking_inverse_bound(1);
  EXPECT_EQ(one.patterns, 1u);
  EXPECT_DOUBLE_EQ(one.max_inverse_norm, 1.0);
  // Both 2x2 patterns have inverse spectral norm equal to the golden ratio.
  const MaskingReport two = masking_inverse_bound(2);
  EXPECT_EQ(two.patterns, 2u);
  EXPECT_TRUE(two.all_invertible);
  EXPECT_NEAR(two.max_inverse_norm, (1.0 + std::sqrt(5.0)) / 2.0, 1e-12);
  EXPECT_EQ(masking_matrix(3, 0), (std::vector<std::vector<double>>{{1, 1, 1}, {1, 0, 0}, {1, 1, 0}}));
  EXPECT_EQ(masking_matrix(3, 3), (std::vector<std::vector<double>>{{1, 1, 1}, {0, 1, 1}, {0, 0, 1}}));
  for (int d = 1; d <= 8; ++d) {
    const MaskingReport r = masking_inverse_bound(d);
    EXPECT_EQ(r.patterns, 1u << (d - 1));
    EXPECT_TRUE(r.all_invertible);
    EXPECT_LE(r.max_inverse_norm, 2.0 * d);
  }
  EXPECT_THROW(masking_inverse_bound(0), std::invalid_argument);
}

TEST(Neighborhood, Membership) {
  const Params c({1, 0}, {0, 1}, {1, 1});
  const NeighborhoodSpec spec{c, 0.25};
  EXPECT_TRUE(neighborhood_membership(spec, Params({1.125, 0}, {0.125, 1}, {-50, 7})));
  EXPECT_FALSE(neighborhood_membership(spec, Params({1.25, 0}, {0.0625, 1}, {1, 1})));
  EXPECT_TRUE(neighborhood_membership(spec, Params({1.25, 0}, {0, 1}, {1, 1})));  // closed ball
  EXPECT_THROW(neighborhood_membership(spec, Params({1}, {0}, {1})), std::invalid_argument);
}

TEST(TheoreticalConstants, Formulas) {
  const TeacherSpec t = make_fr_teacher(1);  // R = 1, C = 1/2, rho = 1
  const TheoreticalConstants c = theoretical_constants(t, 10, 0.5);
  EXPECT_NEAR(c.k_min, 6144.0 * std::log(48.0), 1e-9);
  EXPECT_NEAR(c.k_min, 23785.0, 1.0);
  EXPECT_EQ(c.k_used, std::ceil(c.k_min));
  EXPECT_NEAR(c.sigma_o_max * 4.0 * c.k_used * c.sigma_h_min * std::log(6.0 * c.k_used / 0.5), 1.0, 1e-12);
  EXPECT_THROW(theoretical_constants(t, 10, 1.5), std::invalid_argument);
  // The PL bound is quadratic in sigma_h.
  EXPECT_NEAR(pl_proposition_bound(t, 4, 0.2, 2.0) / pl_proposition_bound(t, 4, 0.2, 1.0), 4.0, 1e-12);
}

TEST(EventProbability, MonteCarloMatchesQuadrature) {
  for (double a : {-1.0, 0.0, 0.5 - 1.0 / 12.0}) {
    const EventProbability e = event_probability_mc(a, 1.0 / 12.0, 1.0, 400000, 77);
    EXPECT_LE(std::abs(e.p_hat - e.exact), 4.0 * e.standard_error + 1e-12) << "a=" << a;
    EXPECT_GE(e.exact, e.bound);
    EXPECT_TRUE(e.pass);
    EXPECT_DOUBLE_EQ(e.bound, (1.0 / 12.0) / 512.0);
  }
}

TEST(PLSample, CountsQualifiedPoints) {
  const Dataset d = make_dataset({-0.5, 0.5}, {1, -1});
  const Params c({1, -1, 1}, {0.1, 0.2, -0.3}, {0.01, 0.01, 0.01});
  const PLSample s = sample_pl_points(c, d, 0.05, 0.01, 0.0, 200, 3);
  EXPECT_EQ(s.drawn, 200u);
  EXPECT_EQ(s.qualified, 200u);  // tiny outputs keep L near 1
  EXPECT_EQ(s.violations, 0u);
  EXPECT_GE(s.min_half_grad_sq, 0.0);
}
