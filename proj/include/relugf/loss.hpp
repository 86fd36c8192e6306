#pragma once

#include <functional>
#include <string>
#include <vector>

#include "relugf/data.hpp"
#include "relugf/distribution.hpp"
#include "relugf/params.hpp"

namespace relugf {

enum class LossKind { kExponential, kLogistic };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

/// Value used for the ReLU derivative at exactly zero preactivation.
struct SubgradientPolicy {
  double kink_value = 0.0;
};

double loss_value(LossKind kind, double q);
/// l'(q), always negative.
double loss_derivative(LossKind kind, double q);
/// log l(q), finite for every finite q.
double log_loss_value(LossKind kind, double q);
/// -l'(q) / l(q), which is 1 for the exponential loss.
double loss_decay_ratio(LossKind kind, double q);
/// l''(q) / l(q), which is 1 for the exponential loss.
double loss_curvature_ratio(LossKind kind, double q);

/// y_i * N(x_i) for every example.
std::vector<double> margins(const Params& p, const Dataset& d);

double empirical_loss(const Params& p, const Dataset& d, LossKind kind);

/// log of the empirical loss, computed with a log-sum-exp so that it stays
/// finite when the loss itself underflows.
double log_empirical_loss(const Params& p, const Dataset& d, LossKind kind);

/// Element of the Clarke subdifferential of the empirical loss selected by
/// `policy`, laid out like Params (gradient in w, b and v).
Params loss_gradient(const Params& p, const Dataset& d, LossKind kind,
                     SubgradientPolicy policy = {});

/// Reusable evaluator of the training objective on flat parameter vectors,
/// used by the integrator. Not thread safe; one per trajectory.
class Objective {
 public:
  Objective(const Dataset& d, LossKind kind, SubgradientPolicy policy);

  struct Eval {
    double log_loss = 0.0;
    double min_margin = 0.0;
  };

  /// Fills grad_over_loss (size 3k) with grad L / L and returns log L.
  Eval evaluate(const double* theta, std::size_t k, double* grad_over_loss);

  /// Plain gradient of L, written into grad (size 3k). Returns L.
  double gradient(const double* theta, std::size_t k, double* grad);

  const std::vector<double>& last_margins() const { return q_; }
  /// Per-example coefficients of the last evaluate()/gradient() call, so that
  /// grad_w_j = v_j sum_i c_i s_ij x_i and grad_b_j = v_j sum_i c_i s_ij.
  const std::vector<double>& last_coefficients() const { return coef_; }
  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& ys() const { return ys_; }
  /// After evaluate(): a_i = -l'(q_i) / sum l and b_i = l''(q_i) / sum l, so
  /// that -grad L / L = sum a_i grad q_i.
  void example_weights(std::vector<double>& a, std::vector<double>& b) const;
  SubgradientPolicy policy() const { return policy_; }
  std::size_t size() const { return xs_.size(); }

 private:
  void forward(const double* theta, std::size_t k);
  void gradient_from_coefficients(const double* theta, std::size_t k, double* grad);

  std::vector<double> xs_;
  std::vector<double> ys_;
  LossKind kind_;
  SubgradientPolicy policy_;
  std::vector<double> out_, q_, logl_, coef_, xs_nz_, coef_nz_;
  double lse_ = 0.0;
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;  // summed error estimate over all pieces
  bool converged = true;
};

/// Adaptive Gauss-Kronrod integral of `f` over `iv`, split at `splits`
/// (points outside the interval are ignored). Converged when the summed error
/// estimate is at most max(abs_tol, 1e-8 |value|).
QuadratureResult integrate_split(const std::function<double(double)>& f, Interval iv,
                                 std::vector<double> splits, double abs_tol = 1e-8,
                                 unsigned max_depth = 15);

/// E_x[l(N(x) sign(N*(x)))] for x ~ dist, split at the breakpoints of N, the
/// teacher's change points and the density breaks. Throws std::runtime_error
/// carrying the achieved error if the quadrature does not converge.
QuadratureResult population_loss(const Params& p, const TeacherSpec& spec,
                                 const Distribution& dist, LossKind kind,
                                 unsigned max_depth = 15);

}  // namespace relugf
