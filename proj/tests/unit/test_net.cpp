#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "relugf/params.hpp"
#include "relugf/piecewise.hpp"

using namespace relugf;

namespace {

Params random_params(std::mt19937_64& rng, std::size_t k) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> w(k), b(k), v(k);
  for (std::size_t j = 0; j < k; ++j) {
    w[j] = g(rng);
    b[j] = g(rng);
    v[j] = g(rng);
  }
  return Params(w, b, v);
}

// Direct transcription of the network formula.
double reference_eval(const Params& p, double x) {
  double s = 0.0;
  for (std::size_t j = 0; j < p.width(); ++j) s += p.v()[j] * std::max(0.0, p.w()[j] * x + p.b()[j]);
  return s;
}

}  // namespace

TEST(Params, RejectsBadShapes) {
  EXPECT_THROW(Params({1.0}, {1.0, 2.0}, {1.0}), std::invalid_argument);
  EXPECT_THROW(Params({}, {}, {}), std::invalid_argument);
  EXPECT_THROW(Params({NAN}, {0.0}, {0.0}), std::invalid_argument);
  EXPECT_THROW(Params::from_flat(std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST(Params, FlatLayoutRoundTrips) {
  const Params p({1, 2}, {3, 4}, {5, 6});
  EXPECT_EQ(p.flat(), (std::vector<double>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(Params::from_flat(p.flat()), p);
  EXPECT_DOUBLE_EQ(p.squared_norm(), 91.0);
}

TEST(Params, JsonFieldOrder) {
  const Params p({1}, {2}, {3});
  nlohmann::ordered_json j = p;
  EXPECT_EQ(j.dump(), R"({"w":[1.0],"b":[2.0],"v":[3.0],"k":1})");
  EXPECT_EQ(j.get<Params>(), p);
}

TEST(Evaluate, Examples) {
  EXPECT_EQ(evaluate(Params({1}, {0}, {1}), 2.0), 2.0);
  const Params dead({0, 0}, {0, 0}, {5, -5});
  for (double x : {-3.0, 0.0, 7.0}) EXPECT_EQ(evaluate(dead, x), 0.0);
  EXPECT_EQ(evaluate(Params({0, 0}, {1, 0}, {1, 0}), 4.0), 1.0);
}

TEST(Evaluate, MatchesReference) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const Params p = random_params(rng, 1 + t % 17);
    for (double x : {-2.0, -0.5, 0.0, 0.3, 1.7}) EXPECT_EQ(evaluate(p, x), reference_eval(p, x));
  }
}

TEST(Scale, Examples) {
  const Params p({1}, {0}, {1});
  EXPECT_EQ(scale(p, 1.0), p);
  EXPECT_EQ(evaluate(scale(p, 2.0), 3.0), 12.0);
  EXPECT_THROW(scale(p, 0.0), std::invalid_argument);
  EXPECT_THROW(scale(p, -1.0), std::invalid_argument);
}

TEST(Scale, HomogeneityProperty) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3.0, 3.0), a(0.01, 100.0);
  for (int t = 0; t < 200; ++t) {
    const Params p = random_params(rng, 1 + t % 13);
    const double alpha = t == 0 ? 0.5 : a(rng);
    const Params q = scale(p, alpha);
    for (int i = 0; i < 100; ++i) {
      const double x = u(rng);
      const double expect = alpha * alpha * evaluate(p, x);
      EXPECT_LE(std::abs(evaluate(q, x) - expect), 1e-12 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST(Piecewise, Examples) {
  const Interval dom{-1.0, 1.0};
  auto relu = to_piecewise(Params({1}, {0}, {1}), dom);
  EXPECT_EQ(relu.breakpoints(), std::vector<double>{0.0});
  EXPECT_EQ(relu.slopes(), (std::vector<double>{0.0, 1.0}));

  auto twice = to_piecewise(Params({1, 1}, {0, 0}, {1, 1}), dom);
  EXPECT_EQ(twice.breakpoints(), std::vector<double>{0.0});
  EXPECT_EQ(twice.slopes(), (std::vector<double>{0.0, 2.0}));

  auto absval = to_piecewise(Params({1, -1}, {0, 0}, {1, 1}), dom);
  EXPECT_EQ(absval.breakpoints(), std::vector<double>{0.0});
  EXPECT_EQ(absval.slopes(), (std::vector<double>{-1.0, 1.0}));
  EXPECT_TRUE(sign_changes(absval, dom).empty());

  auto identity = to_piecewise(Params({1, -1}, {0, 0}, {1, -1}), dom);  // relu(x) - relu(-x) = x
  EXPECT_TRUE(identity.breakpoints().empty());
  const auto sc = sign_changes(identity, dom);
  ASSERT_EQ(sc.size(), 1u);
  EXPECT_NEAR(sc[0], 0.0, 1e-15);
}

TEST(Piecewise, ReconstructionProperty) {
  std::mt19937_64 rng(3);
  const Interval dom{-2.0, 2.0};
  for (int t = 0; t < 1000; ++t) {
    const Params p = random_params(rng, 1 + t % 20);
    const PiecewiseLinear f = to_piecewise(p, dom);
    EXPECT_LE(f.breakpoints().size(), p.width());
    // Canonical form: adjacent slopes differ.
    for (std::size_t i = 0; i + 1 < f.slopes().size(); ++i) EXPECT_NE(f.slopes()[i], f.slopes()[i + 1]);
    double worst = 0.0;
    for (int i = 0; i <= 400; ++i) {
      const double x = dom.lo + (dom.hi - dom.lo) * i / 400.0;
      const double e = evaluate(p, x);
      worst = std::max(worst, std::abs(f(x) - e) / std::max(1.0, std::abs(e)));
    }
    EXPECT_LE(worst, 1e-9);
  }
}

TEST(Piecewise, BreakpointsAreActivationPoints) {
  std::mt19937_64 rng(4);
  const Interval dom{-3.0, 3.0};
  for (int t = 0; t < 200; ++t) {
    const Params p = random_params(rng, 1 + t % 9);
    const PiecewiseLinear f = to_piecewise(p, dom);
    for (double bp : f.breakpoints()) {
      double nearest = INFINITY;
      for (std::size_t j = 0; j < p.width(); ++j) nearest = std::min(nearest, std::abs(p.breakpoint(j) - bp));
      EXPECT_LE(nearest, 1e-9);
    }
  }
}

TEST(Piecewise, ScaleInvariantBreakpoints) {
  std::mt19937_64 rng(5);
  const Interval dom{-2.0, 2.0};
  for (int t = 0; t < 200; ++t) {
    const Params p = random_params(rng, 1 + t % 11);
    const double alpha = 0.1 + 0.37 * (t % 30);
    const auto f = to_piecewise(p, dom), g = to_piecewise(scale(p, alpha), dom);
    ASSERT_EQ(f.breakpoints().size(), g.breakpoints().size());
    for (std::size_t i = 0; i < f.breakpoints().size(); ++i)
      EXPECT_NEAR(f.breakpoints()[i], g.breakpoints()[i], 1e-12);
    for (std::size_t i = 0; i < f.slopes().size(); ++i)
      EXPECT_NEAR(g.slopes()[i], alpha * alpha * f.slopes()[i], 1e-12 * std::max(1.0, std::abs(g.slopes()[i])));
  }
}

TEST(Piecewise, DeadSlopeNeuronIsConstant) {
  const Params p({1e-13, 1.0}, {2.0, 0.0}, {3.0, 1.0});
  const auto f = to_piecewise(p, {-1.0, 1.0});
  EXPECT_EQ(f.breakpoints(), std::vector<double>{0.0});
  EXPECT_NEAR(f(-0.5), 6.0, 1e-11);
}

TEST(Piecewise, ZeroStretchTakesLabelMinusOne) {
  // relu(x - 0.5) - relu(-x - 0.5): zero on [-0.5, 0.5], negative left, positive right.
  const Params p({1, -1}, {-0.5, -0.5}, {1, -1});
  const auto f = to_piecewise(p, {-1.0, 1.0});
  const auto sc = sign_changes(f, {-1.0, 1.0});
  ASSERT_EQ(sc.size(), 1u);
  EXPECT_NEAR(sc[0], 0.5, 1e-12);  // label -1 on the zero stretch, +1 after it
  // Zero stretch between positive parts: labels +1, -1, +1.
  const auto g = to_piecewise(Params({1, -1}, {-0.5, -0.5}, {1, 1}), {-1.0, 1.0});
  const auto sg = sign_changes(g, {-1.0, 1.0});
  ASSERT_EQ(sg.size(), 2u);
  EXPECT_NEAR(sg[0], -0.5, 1e-12);
  EXPECT_NEAR(sg[1], 0.5, 1e-12);
}
