#include "relugf/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "relugf/kernels.hpp"

namespace relugf {

std::string to_string(LossKind kind) {
  return kind == LossKind::kExponential ? "exponential" : "logistic";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "exponential" || s == "exp") return LossKind::kExponential;
  if (s == "logistic") return LossKind::kLogistic;
  throw std::invalid_argument("unknown loss: " + s);
}

double loss_value(LossKind kind, double q) {
  if (kind == LossKind::kExponential) return std::exp(-q);
  if (q < -30.0) return -q + std::log1p(std::exp(q));
  return std::log1p(std::exp(-q));
}

double loss_derivative(LossKind kind, double q) {
  if (kind == LossKind::kExponential) return -std::exp(-q);
  if (q < 0.0) return -1.0 / (1.0 + std::exp(q));
  const double e = std::exp(-q);
  return -e / (1.0 + e);
}

double log_loss_value(LossKind kind, double q) {
  if (kind == LossKind::kExponential) return -q;
  // log(log1p(y)) with y = e^{-q}; for tiny y it is log y + log1p(-y/2 + ...).
  if (q > 36.0) return -q - 0.5 * std::exp(-q);
  return std::log(loss_value(kind, q));
}

double loss_decay_ratio(LossKind kind, double q) {
  if (kind == LossKind::kExponential) return 1.0;
  if (q > 18.0) {
    const double y = std::exp(-q);
    return 1.0 - 0.5 * y;
  }
  return -loss_derivative(kind, q) / loss_value(kind, q);
}

double loss_curvature_ratio(LossKind kind, double q) {
  if (kind == LossKind::kExponential) return 1.0;
  if (q > 36.0) return 1.0 - 1.5 * std::exp(-q);
  const double z = std::exp(-std::abs(q));  // l'' = z / (1 + z)^2 either way
  return z / ((1.0 + z) * (1.0 + z)) / loss_value(kind, q);
}

std::vector<double> margins(const Params& p, const Dataset& d) {
  std::vector<double> out(d.size());
  kernels::active().forward(p.w().data(), p.b().data(), p.v().data(), p.width(), d.xs.data(),
                            d.size(), out.data());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] *= d.ys[i];
  return out;
}

double empirical_loss(const Params& p, const Dataset& d, LossKind kind) {
  double acc = 0.0;
  for (double q : margins(p, d)) acc += loss_value(kind, q);
  return acc / static_cast<double>(d.size());
}

namespace {

double log_sum_exp(const std::vector<double>& a) {
  const double m = *std::max_element(a.begin(), a.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : a) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double log_empirical_loss(const Params& p, const Dataset& d, LossKind kind) {
  std::vector<double> logs;
  logs.reserve(d.size());
  for (double q : margins(p, d)) logs.push_back(log_loss_value(kind, q));
  return log_sum_exp(logs) - std::log(static_cast<double>(d.size()));
}

Params loss_gradient(const Params& p, const Dataset& d, LossKind kind, SubgradientPolicy policy) {
  Objective obj(d, kind, policy);
  const std::vector<double> theta = p.flat();
  std::vector<double> g(theta.size());
  obj.gradient(theta.data(), p.width(), g.data());
  return Params::from_flat(g);
}

Objective::Objective(const Dataset& d, LossKind kind, SubgradientPolicy policy)
    : xs_(d.xs), ys_(d.ys.begin(), d.ys.end()), kind_(kind), policy_(policy) {
  if (!(policy.kink_value >= 0.0 && policy.kink_value <= 1.0)) {
    throw std::invalid_argument("kink_value must lie in [0, 1]");
  }
  const std::size_t n = xs_.size();
  out_.resize(n);
  q_.resize(n);
  logl_.resize(n);
  coef_.resize(n);
  xs_nz_.reserve(n);
  coef_nz_.reserve(n);
}

void Objective::forward(const double* theta, std::size_t k) {
  kernels::active().forward(theta, theta + k, theta + 2 * k, k, xs_.data(), xs_.size(),
                            out_.data());
  for (std::size_t i = 0; i < xs_.size(); ++i) q_[i] = ys_[i] * out_[i];
}

Objective::Eval Objective::evaluate(const double* theta, std::size_t k, double* grad_over_loss) {
  forward(theta, k);
  const std::size_t n = xs_.size();
  for (std::size_t i = 0; i < n; ++i) logl_[i] = log_loss_value(kind_, q_[i]);
  const double lse = log_sum_exp(logl_);
  lse_ = lse;
  Eval e;
  e.log_loss = lse - std::log(static_cast<double>(n));
  e.min_margin = *std::min_element(q_.begin(), q_.end());
  // l'_i / (n L) = -(l_i / sum l) * (-l'_i / l_i)
  for (std::size_t i = 0; i < n; ++i) {
    coef_[i] = -ys_[i] * std::exp(logl_[i] - lse) * loss_decay_ratio(kind_, q_[i]);
  }
  gradient_from_coefficients(theta, k, grad_over_loss);
  return e;
}

void Objective::example_weights(std::vector<double>& a, std::vector<double>& b) const {
  const std::size_t n = xs_.size();
  a.resize(n);
  b.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::exp(logl_[i] - lse_);
    a[i] = p * loss_decay_ratio(kind_, q_[i]);
    b[i] = p * loss_curvature_ratio(kind_, q_[i]);
  }
}

double Objective::gradient(const double* theta, std::size_t k, double* grad) {
  forward(theta, k);
  const std::size_t n = xs_.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    loss += loss_value(kind_, q_[i]);
    coef_[i] = ys_[i] * loss_derivative(kind_, q_[i]) * inv_n;
  }
  gradient_from_coefficients(theta, k, grad);
  return loss * inv_n;
}

void Objective::gradient_from_coefficients(const double* theta, std::size_t k, double* grad) {
  // Late in training most softmax weights underflow to exactly zero; those
  // examples add exact zeros to every sum, so they are left out.
  xs_nz_.clear();
  coef_nz_.clear();
  for (std::size_t i = 0; i < xs_.size(); ++i) {
    if (coef_[i] == 0.0) continue;
    xs_nz_.push_back(xs_[i]);
    coef_nz_.push_back(coef_[i]);
  }
  kernels::active().gradient(theta, theta + k, theta + 2 * k, k, xs_nz_.data(), xs_nz_.size(),
                             coef_nz_.data(), policy_.kink_value, grad, grad + k, grad + 2 * k);
}

QuadratureResult integrate_split(const std::function<double(double)>& f, Interval iv,
                                 std::vector<double> splits, double abs_tol, unsigned max_depth) {
  std::vector<double> cuts{iv.lo};
  std::sort(splits.begin(), splits.end());
  for (double s : splits) {
    if (s > cuts.back() && s < iv.hi) cuts.push_back(s);
  }
  cuts.push_back(iv.hi);

  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  QuadratureResult res;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    if (!(cuts[c + 1] > cuts[c])) continue;
    double err = 0.0;
    res.value += GK::integrate(f, cuts[c], cuts[c + 1], max_depth, 1e-12, &err);
    res.error += err;
  }
  res.converged = res.error <= std::max(abs_tol, 1e-8 * std::abs(res.value));
  return res;
}

QuadratureResult population_loss(const Params& p, const TeacherSpec& spec,
                                 const Distribution& dist, LossKind kind, unsigned max_depth) {
  const Interval sup = dist.support();
  std::vector<double> splits = spec.change_points;
  for (std::size_t j = 0; j < p.width(); ++j) {
    const double bp = p.breakpoint(j);
    if (std::isfinite(bp)) splits.push_back(bp);
  }
  for (double x : dist.density_breaks()) splits.push_back(x);
  auto integrand = [&](double x) {
    return loss_value(kind, evaluate(p, x) * spec.label(x)) * dist.pdf(x);
  };
  QuadratureResult res = integrate_split(integrand, sup, std::move(splits), 1e-8, max_depth);
  // The integrand is nonnegative, so an overflowed sum is a true +inf.
  if (res.value == INFINITY) res.converged = true;
  if (!res.converged) {
    std::ostringstream msg;
    msg << "population_loss: quadrature did not converge (value " << res.value
        << ", achieved error " << res.error << ")";
    throw std::runtime_error(msg.str());
  }
  return res;
}

}  // namespace relugf
