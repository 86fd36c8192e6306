#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "relugf/loss.hpp"

using namespace relugf;

namespace {

const Dataset kExample1 = make_dataset({-4.0, 4.0}, {1, 1});
const Params kExample1Init({0, 0}, {1, 0}, {1, 0});

Params random_params(std::mt19937_64& rng, std::size_t k, double s = 1.0) {
  std::normal_distribution<double> g(0.0, s);
  std::vector<double> w(k), b(k), v(k);
  for (std::size_t j = 0; j < k; ++j) {
    w[j] = g(rng);
    b[j] = g(rng);
    v[j] = g(rng);
  }
  return Params(w, b, v);
}

Dataset random_dataset(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> xs(n);
  for (auto& x : xs) x = u(rng);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::vector<int> ys(xs.size());
  for (auto& y : ys) y = rng() % 2 ? 1 : -1;
  return make_dataset(xs, ys);
}

}  // namespace

TEST(Loss, Values) {
  EXPECT_EQ(loss_value(LossKind::kExponential, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(loss_value(LossKind::kLogistic, 0.0), std::log(2.0));
  for (double q : {-50.0, -3.0, -0.1, 0.0, 0.2, 4.0, 40.0, 700.0}) {
    EXPECT_DOUBLE_EQ(loss_value(LossKind::kExponential, q), std::exp(-q));
    const double expect = q > 0 ? std::log1p(std::exp(-q)) : -q + std::log1p(std::exp(q));
    EXPECT_NEAR(loss_value(LossKind::kLogistic, q), expect, 1e-15 * std::max(1.0, expect));
    // -l' = l for the exponential loss, 1/(1+e^q) for the logistic loss.
    EXPECT_DOUBLE_EQ(-loss_derivative(LossKind::kExponential, q), loss_value(LossKind::kExponential, q));
    EXPECT_NEAR(-loss_derivative(LossKind::kLogistic, q), 1.0 / (1.0 + std::exp(q)), 1e-16);
    EXPECT_LT(loss_derivative(LossKind::kLogistic, q), 0.0);
  }
  EXPECT_THROW(loss_kind_from_string("hinge"), std::invalid_argument);
}

TEST(Loss, LogLossIsStableForHugeMargins) {
  EXPECT_EQ(log_loss_value(LossKind::kExponential, 1e6), -1e6);
  EXPECT_NEAR(log_loss_value(LossKind::kLogistic, 1e6), -1e6, 1e-9);
  EXPECT_NEAR(log_loss_value(LossKind::kLogistic, 1.0), std::log(std::log1p(std::exp(-1.0))), 1e-15);
}

TEST(EmpiricalLoss, Examples) {
  const Dataset d = make_dataset({-0.3, 0.1, 0.8}, {1, -1, 1});
  EXPECT_EQ(empirical_loss(Params::zeros(3), d, LossKind::kExponential), 1.0);
  for (LossKind k : {LossKind::kExponential, LossKind::kLogistic}) {
    const double l = empirical_loss(kExample1Init, kExample1, k);
    EXPECT_DOUBLE_EQ(l, loss_value(k, 1.0));
    EXPECT_LT(l, 0.5);
  }
}

TEST(EmpiricalLoss, MatchesOneLineReference) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 200; ++t) {
    const Params p = random_params(rng, 1 + t % 15);
    const Dataset d = random_dataset(rng, 1 + t % 25);
    for (LossKind kind : {LossKind::kExponential, LossKind::kLogistic}) {
      double ref = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) ref += loss_value(kind, d.ys[i] * evaluate(p, d.xs[i]));
      ref /= d.size();
      EXPECT_NEAR(empirical_loss(p, d, kind), ref, 1e-15 * std::max(1.0, ref));
      EXPECT_NEAR(log_empirical_loss(p, d, kind), std::log(ref), 1e-13);
    }
  }
}

TEST(Gradient, Example1) {
  const Params g = loss_gradient(kExample1Init, kExample1, LossKind::kExponential);
  EXPECT_EQ(g.w()[1], 0.0);
  EXPECT_EQ(g.b()[1], 0.0);
  EXPECT_EQ(g.v()[1], 0.0);
  EXPECT_EQ(g.w()[0], 0.0);
  // dL/db1 = dL/dv1 = -e^{-1}.
  EXPECT_DOUBLE_EQ(g.b()[0], -std::exp(-1.0));
  EXPECT_DOUBLE_EQ(g.v()[0], -std::exp(-1.0));
}

TEST(Gradient, FiniteDifferences) {
  std::mt19937_64 rng(32);
  int tested = 0;
  while (tested < 1000) {
    const Params p = random_params(rng, 1 + rng() % 12);
    const Dataset d = random_dataset(rng, 1 + rng() % 20);
    double gap = INFINITY;
    for (std::size_t j = 0; j < p.width(); ++j)
      for (double x : d.xs) gap = std::min(gap, std::abs(p.w()[j] * x + p.b()[j]));
    if (gap <= 1e-3) continue;
    ++tested;
    const LossKind kind = tested % 2 ? LossKind::kLogistic : LossKind::kExponential;
    const auto g = loss_gradient(p, d, kind).flat();
    auto th = p.flat();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < th.size(); ++i) {
      const double h = 1e-6, keep = th[i];
      th[i] = keep + h;
      const double up = empirical_loss(Params::from_flat(th), d, kind);
      th[i] = keep - h;
      const double dn = empirical_loss(Params::from_flat(th), d, kind);
      th[i] = keep;
      const double fd = (up - dn) / (2 * h);
      num += (fd - g[i]) * (fd - g[i]);
      den += g[i] * g[i];
    }
    EXPECT_LE(std::sqrt(num), 1e-5 * std::max(std::sqrt(den), 1e-8));
  }
}

TEST(Gradient, KinkPolicy) {
  // x = 0 sits on the kink of neuron 0 (b = 0).
  const Dataset d = make_dataset({0.0, 0.5}, {1, -1});
  const Params p({1.0}, {0.0}, {2.0});
  const double c0 = -std::exp(-0.0) / 2.0;  // l'(q_0) y_0 / n with q_0 = 0
  for (double kv : {0.0, 0.5, 1.0}) {
    const Params g = loss_gradient(p, d, LossKind::kExponential, {kv});
    const double c1 = std::exp(-(-1.0)) / 2.0;  // -l'(q_1) * ... with y_1 = -1, q_1 = -1
    EXPECT_NEAR(g.b()[0], 2.0 * (c0 * kv + c1 * 1.0), 1e-15);
  }
  EXPECT_THROW(Objective(d, LossKind::kExponential, {1.5}), std::invalid_argument);
}

TEST(PopulationLoss, ZeroNetwork) {
  const TeacherSpec t = make_fr_teacher(3);
  const auto q = population_loss(Params::zeros(2), t, Distribution::uniform(1.0), LossKind::kExponential);
  EXPECT_NEAR(q.value, 1.0, 1e-12);
  const auto l = population_loss(Params::zeros(2), t, Distribution::uniform(1.0), LossKind::kLogistic);
  EXPECT_NEAR(l.value, std::log(2.0), 1e-12);
}

TEST(PopulationLoss, ClosedFormSingleRelu) {
  // N(x) = relu(-x) against f_1 (positive on x < 0): integrand (1/2) e^{x} on
  // [-1, 0] and (1/2) on [0, 1].
  const TeacherSpec t = make_fr_teacher(1);
  const auto q = population_loss(Params({-1.0}, {0.0}, {1.0}), t, Distribution::uniform(1.0), LossKind::kExponential);
  EXPECT_NEAR(q.value, 0.5 * (1.0 - std::exp(-1.0)) + 0.5, 1e-10);
}

TEST(PopulationLoss, DecreasesAlongTeacherScaling) {
  const TeacherSpec t = make_fr_teacher(2);
  double prev = INFINITY;
  for (double a : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    const double v = population_loss(scale(t.teacher, a), t, Distribution::uniform(1.0), LossKind::kExponential).value;
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(Quadrature, SplitsAtKinks) {
  const auto q = integrate_split([](double x) { return std::abs(x - 0.3); }, {-1.0, 1.0}, {0.3});
  EXPECT_NEAR(q.value, 0.5 * 1.3 * 1.3 + 0.5 * 0.7 * 0.7, 1e-12);
  EXPECT_TRUE(q.converged);
}
