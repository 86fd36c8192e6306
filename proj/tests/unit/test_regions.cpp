#include <gtest/gtest.h>

#include <random>

#include "relugf/regions.hpp"

using namespace relugf;

TEST(Regions, Examples) {
  const Interval dom{-2.0, 2.0};
  EXPECT_EQ(count_regions(Params({1}, {0}, {1}), dom).region_count, 2u);
  EXPECT_EQ(count_regions(Params({1, -1}, {0, 0}, {1, 1}), dom).region_count, 2u);
  // relu(x) - relu(-x) = x has no real kink.
  const RegionReport id = count_regions(Params({1, -1}, {0, 0}, {1, -1}), dom);
  EXPECT_EQ(id.region_count, 1u);
  EXPECT_EQ(count_regions(Params({0, 0}, {1, -1}, {1, 1}), dom).region_count, 1u);
  // Breakpoint outside the domain.
  EXPECT_EQ(count_regions(Params({1}, {-5}, {1}), dom).region_count, 1u);

  const RegionReport hat = count_regions(Params({1, 1, 1}, {1, 0, -1}, {1, -2, 1}), dom);
  EXPECT_EQ(hat.region_count, 4u);
  ASSERT_EQ(hat.kinds.size(), 3u);
  EXPECT_EQ(hat.kinds[0], BoundaryKind::kIncreases);
  EXPECT_EQ(hat.kinds[1], BoundaryKind::kDecreases);
  EXPECT_EQ(hat.kinds[2], BoundaryKind::kIncreases);
}

TEST(Regions, ScaleInvariantAndBoundedByWidth) {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = 1 + t % 25;
    std::vector<double> w(k), b(k), v(k);
    for (std::size_t j = 0; j < k; ++j) {
      w[j] = g(rng);
      b[j] = g(rng);
      v[j] = g(rng);
    }
    const Params p(w, b, v);
    const auto a = count_regions(p, region_domain(1.0));
    const auto c = count_regions(scale(p, 0.05 + 0.3 * (t % 17)), region_domain(1.0));
    EXPECT_EQ(a.region_count, c.region_count);
    EXPECT_LE(a.region_count, k + 1);
    EXPECT_GE(a.region_count, 1u);
  }
}

TEST(Regions, Bound) {
  RegionReport r;
  r.region_count = 99;
  EXPECT_EQ(region_bound_check(r, 1).bound, 99);
  EXPECT_TRUE(region_bound_check(r, 1).pass);
  EXPECT_EQ(region_bound_check(r, 1).slack, 0);
  r.region_count = 100;
  EXPECT_FALSE(region_bound_check(r, 1).pass);
  EXPECT_EQ(region_bound_check(r, 2).bound, 131);
  EXPECT_EQ(region_bound_check(r, 3).bound, 163);
}

TEST(Activation, Example1HasNoActivationPoints) {
  const Dataset d = make_dataset({-4.0, 4.0}, {1, 1});
  const ActivationReport a = activation_points_per_interval(Params({0, 0}, {1, 0}, {1, 0}), d, 1e-3);
  EXPECT_TRUE(a.points.empty());
  EXPECT_EQ(a.margin_one.size(), 2u);
  EXPECT_EQ(a.max_inner, 0u);
  EXPECT_EQ(a.max_outer, 0u);
}

TEST(Activation, CountsPerInterval) {
  // Kinks at -0.1, 0, 0.2 and 0.7; N(-0.5) = 0.4 and N(0.5) = -0.8.
  const Dataset d = make_dataset({-0.5, 0.5}, {1, -1});
  const Params q({-1.0, 1.0, 1.0, 1.0}, {-0.1, 0.0, -0.2, -0.7}, {1.0, -1.0, -1.0, 1.0});
  const double m0 = evaluate(q, -0.5), m1 = -evaluate(q, 0.5);
  ASSERT_NEAR(m0, 0.4, 1e-15);
  ASSERT_NEAR(m1, 0.8, 1e-15);
  const ActivationReport a = activation_points_per_interval(scale(q, 1.0 / std::sqrt(m0)), d, 1e-3);
  EXPECT_EQ(a.points.size(), 4u);
  EXPECT_EQ(a.margin_one, std::vector<std::size_t>{0});
  ASSERT_EQ(a.intervals.size(), a.margin_one.size() + 1);
  std::size_t total = 0;
  for (const auto& iv : a.intervals) {
    EXPECT_EQ(iv.count, iv.increasing + iv.decreasing);
    total += iv.count;
  }
  EXPECT_EQ(total, a.points.size());
}
