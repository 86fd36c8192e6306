#include "relugf/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "relugf/kernels.hpp"

namespace relugf {

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kLossBelowInvN: return "loss<1/n";
    case EventKind::kLossBelowHalfInvN: return "loss<=1/(2n)";
    case EventKind::kKinkCrossing: return "kink-crossing";
    case EventKind::kPlateau: return "plateau";
  }
  return "?";
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::kMaxTime: return "max-time";
    case Termination::kMaxTau: return "max-tau";
    case Termination::kStepLimit: return "step-limit";
    case Termination::kLossFloor: return "loss-floor";
    case Termination::kHalvingCap: return "halving-cap";
    case Termination::kSmallLoss: return "small-loss";
    case Termination::kPlateau: return "plateau";
    case Termination::kStepUnderflow: return "step-underflow";
    case Termination::kNonFinite: return "non-finite";
    case Termination::kCriterion: return "criterion";
  }
  return "?";
}

std::string to_string(Integrator i) {
  switch (i) {
    case Integrator::kRK45: return "rk45";
    case Integrator::kRK4: return "rk4";
    case Integrator::kRosenbrock: return "rosenbrock";
    case Integrator::kAuto: return "auto";
  }
  return "?";
}

Integrator integrator_from_string(const std::string& s) {
  if (s == "rk45") return Integrator::kRK45;
  if (s == "rk4") return Integrator::kRK4;
  if (s == "rosenbrock") return Integrator::kRosenbrock;
  if (s == "auto") return Integrator::kAuto;
  throw std::invalid_argument("unknown integrator: " + s);
}

bool Trajectory::reached(EventKind kind) const {
  return std::any_of(events.begin(), events.end(),
                     [&](const FlowEvent& e) { return e.kind == kind; });
}

double angle_between(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return 2.0 * std::asin(std::min(1.0, 0.5 * std::sqrt(s)));
}

namespace {

// log(1 + t1) from u0 = log(1 + t0), where t1 - t0 = int exp(-log L) over a
// tau step of length h along which log L moves linearly from l0 to l1.
double advance_log1p_time(double u0, double h, double l0, double l1) {
  const double m = l0 - l1;
  double log_ratio = 0.0;  // log((e^m - 1) / m)
  if (std::abs(m) < 1e-8) {
    log_ratio = 0.5 * m;
  } else if (m > 30.0) {
    log_ratio = m - std::log(m);
  } else {
    log_ratio = std::log(std::expm1(m) / m);
  }
  const double log_dt = std::log(h) - l0 + log_ratio;
  const double hi = std::max(u0, log_dt);
  return hi + std::log1p(std::exp(std::min(u0, log_dt) - hi));
}

double norm_of(const double* a, std::size_t m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) s += a[i] * a[i];
  return std::sqrt(s);
}

// State y = [theta (3k), u]; f = dy/dtau.
class Rhs {
 public:
  Rhs(const Dataset& d, LossKind kind, SubgradientPolicy policy, std::size_t k)
      : slide(k, -1), obj_(d, kind, policy), k_(k) {}

  Objective::Eval operator()(const double* y, double* f) {
    ++evals;
    const Objective::Eval e = obj_.evaluate(y, k_, f);
    for (std::size_t j = 0; j < k_; ++j) {
      if (slide[j] >= 0) hold_on_kink(y, f, j, static_cast<std::size_t>(slide[j]));
    }
    for (std::size_t i = 0; i < 3 * k_; ++i) f[i] = -f[i];
    // Capped so that a transient margin error in the stiff phase, where u is
    // advanced separately, cannot overflow.
    f[3 * k_] = std::exp(std::min(-y[3 * k_] - e.log_loss, 700.0));
    return e;
  }

  // Derivative s in the neuron-j, sample-i slot that makes d(w_j x_i + b_j)/dtau
  // vanish, from the coefficients of the last evaluation at y. Also returns
  // the parts of the w and b sums from the other samples.
  struct Control {
    double sigma;
    double sw, sb;  // sums over l != i of c_l s_lj x_l and c_l s_lj
    double ci, xi;
  };
  Control control(const double* y, std::size_t j, std::size_t i) const {
    const auto& c = obj_.last_coefficients();
    const auto& xs = obj_.xs();
    const double w = y[j];
    const double b = y[k_ + j];
    const double kink = obj_.policy().kink_value;
    Control out{0.0, 0.0, 0.0, c[i], xs[i]};
    for (std::size_t l = 0; l < xs.size(); ++l) {
      if (l == i) continue;
      const double pre = w * xs[l] + b;
      const double s = pre > 0.0 ? 1.0 : (pre == 0.0 ? kink : 0.0);
      out.sw += c[l] * s * xs[l];
      out.sb += c[l] * s;
    }
    const double g = out.xi * out.sw + out.sb;
    out.sigma = out.ci == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                              : -g / (out.ci * (out.xi * out.xi + 1.0));
    return out;
  }

  static bool slides(const Control& c) { return c.sigma >= 0.0 && c.sigma <= 1.0; }

  const Objective& objective() const { return obj_; }
  std::size_t width() const { return k_; }

  std::size_t evals = 0;
  std::vector<int> slide;  // per neuron: sample held on its kink, or -1

 private:
  void hold_on_kink(const double* y, double* g, std::size_t j, std::size_t i) const {
    const Control c = control(y, j, i);
    // Out-of-range values are clamped until the runner releases the pair.
    const double sigma = std::isnan(c.sigma) ? 0.0 : std::clamp(c.sigma, 0.0, 1.0);
    g[j] = y[2 * k_ + j] * (c.sw + c.ci * sigma * c.xi);
    g[k_ + j] = y[2 * k_ + j] * (c.sb + c.ci * sigma);
  }

  Objective obj_;
  std::size_t k_;
};

// Dormand-Prince 5(4) with the first-same-as-last property.
class DormandPrince {
 public:
  explicit DormandPrince(std::size_t dim) : dim_(dim), tmp_(dim) {
    for (auto& s : k_) s.resize(dim);
  }

  // Returns false if the trial state is not finite.
  bool step(Rhs& rhs, const std::vector<double>& y0, const std::vector<double>& f0, double h,
            double rtol, double atol, std::vector<double>& y1, std::vector<double>& f1,
            Objective::Eval& e1, double& err) {
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1c = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
    const std::size_t n = dim_;
    auto& k2 = k_[0];
    auto& k3 = k_[1];
    auto& k4 = k_[2];
    auto& k5 = k_[3];
    auto& k6 = k_[4];
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y0[i] + h * (a21 * f0[i]);
    rhs(tmp_.data(), k2.data());
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y0[i] + h * (a31 * f0[i] + a32 * k2[i]);
    rhs(tmp_.data(), k3.data());
    for (std::size_t i = 0; i < n; ++i) {
      tmp_[i] = y0[i] + h * (a41 * f0[i] + a42 * k2[i] + a43 * k3[i]);
    }
    rhs(tmp_.data(), k4.data());
    for (std::size_t i = 0; i < n; ++i) {
      tmp_[i] = y0[i] + h * (a51 * f0[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    }
    rhs(tmp_.data(), k5.data());
    for (std::size_t i = 0; i < n; ++i) {
      tmp_[i] = y0[i] + h * (a61 * f0[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    }
    rhs(tmp_.data(), k6.data());
    for (std::size_t i = 0; i < n; ++i) {
      y1[i] = y0[i] + h * (b1 * f0[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    }
    e1 = rhs(y1.data(), f1.data());
    double acc = 0.0;
    bool finite = std::isfinite(e1.log_loss);
    for (std::size_t i = 0; i < n; ++i) {
      const double ei =
          h * (e1c * f0[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * f1[i]);
      const double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
      const double r = ei / sc;
      acc += r * r;
      finite = finite && std::isfinite(y1[i]) && std::isfinite(f1[i]);
    }
    err = std::sqrt(acc / static_cast<double>(n));
    return finite && std::isfinite(err);
  }

  bool rk4(Rhs& rhs, const std::vector<double>& y0, const std::vector<double>& f0, double h,
           std::vector<double>& y1, std::vector<double>& f1, Objective::Eval& e1) {
    const std::size_t n = dim_;
    auto& k2 = k_[0];
    auto& k3 = k_[1];
    auto& k4 = k_[2];
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y0[i] + 0.5 * h * f0[i];
    rhs(tmp_.data(), k2.data());
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y0[i] + 0.5 * h * k2[i];
    rhs(tmp_.data(), k3.data());
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y0[i] + h * k3[i];
    rhs(tmp_.data(), k4.data());
    bool finite = true;
    for (std::size_t i = 0; i < n; ++i) {
      y1[i] = y0[i] + h / 6.0 * (f0[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      finite = finite && std::isfinite(y1[i]);
    }
    if (!finite) return false;
    e1 = rhs(y1.data(), f1.data());
    return std::isfinite(e1.log_loss);
  }

 private:
  std::size_t dim_;
  std::vector<double> tmp_;
  std::vector<double> k_[5];
};

// Rosenbrock 2(3) pair (Shampine and Reichelt's ode23s), L-stable. Its
// Jacobian is J = A - G^T (diag(b) - a a^T) G with a, b the example weights,
// G the rows grad q_i and A block diagonal (neuron j couples v_j with w_j,
// b_j). Only examples with non-negligible weight enter G, and the linear
// systems are solved with the Woodbury identity. Rows of held neurons are
// projected so that steps keep their kink constraints.
class Rosenbrock {
 public:
  Rosenbrock(std::size_t k, std::size_t dim) : k_(k), dim_(dim), tmp_(dim), f1s_(dim), r_(dim) {
    for (auto& v : kst_) v.resize(dim);
  }

  // Jacobian data at y0; the objective in rhs must have been evaluated at y0.
  void prepare(const Rhs& rhs, const std::vector<double>& y0, const std::vector<double>& f0) {
    const Objective& obj = rhs.objective();
    obj.example_weights(a_, b_);
    const auto& xs = obj.xs();
    const auto& ys = obj.ys();
    const std::size_t n = xs.size();
    const double kink = obj.policy().kink_value;
    const double bmax = *std::max_element(b_.begin(), b_.end());
    support_.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (b_[i] > 1e-16 * bmax) support_.push_back(i);
    }
    held_ = rhs.slide;
    std::vector<double> sigma(k_, 0.0);
    for (std::size_t j = 0; j < k_; ++j) {
      if (held_[j] >= 0) sigma[j] = rhs.control(y0.data(), j, static_cast<std::size_t>(held_[j])).sigma;
    }
    auto s_of = [&](std::size_t i, std::size_t j, double pre) {
      if (held_[j] == static_cast<int>(i)) return std::clamp(sigma[j], 0.0, 1.0);
      return pre > 0.0 ? 1.0 : (pre == 0.0 ? kink : 0.0);
    };
    alpha_.assign(k_, 0.0);
    beta_.assign(k_, 0.0);
    for (std::size_t j = 0; j < k_; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        const double s = s_of(i, j, y0[j] * xs[i] + y0[k_ + j]);
        alpha_[j] += a_[i] * ys[i] * s * xs[i];
        beta_[j] += a_[i] * ys[i] * s;
      }
    }
    const std::size_t m = support_.size() + 1;
    const auto rows = static_cast<Eigen::Index>(3 * k_);
    V_.resize(rows, static_cast<Eigen::Index>(m));
    for (std::size_t c = 0; c < support_.size(); ++c) {
      const std::size_t i = support_[c];
      for (std::size_t j = 0; j < k_; ++j) {
        const double pre = y0[j] * xs[i] + y0[k_ + j];
        const double s = s_of(i, j, pre);
        V_(static_cast<Eigen::Index>(j), c) = ys[i] * y0[2 * k_ + j] * s * xs[i];
        V_(static_cast<Eigen::Index>(k_ + j), c) = ys[i] * y0[2 * k_ + j] * s;
        V_(static_cast<Eigen::Index>(2 * k_ + j), c) = ys[i] * std::max(0.0, pre);
      }
    }
    for (Eigen::Index r = 0; r < rows; ++r) V_(r, static_cast<Eigen::Index>(m - 1)) = f0[static_cast<std::size_t>(r)];
    U_ = V_;
    for (std::size_t j = 0; j < k_; ++j) {
      if (held_[j] < 0) continue;
      const double x = xs[static_cast<std::size_t>(held_[j])];
      for (Eigen::Index c = 0; c < U_.cols(); ++c) project(U_(static_cast<Eigen::Index>(j), c), U_(static_cast<Eigen::Index>(k_ + j), c), x);
    }
    held_x_.assign(k_, 0.0);
    for (std::size_t j = 0; j < k_; ++j) {
      if (held_[j] >= 0) held_x_[j] = xs[static_cast<std::size_t>(held_[j])];
    }
    factored_h_ = -1.0;
  }

  // Only theta is advanced by the Rosenbrock stages. The time coordinate u is
  // integrated in closed form with log L linear over the step; its own rate
  // exp(-u - log L) reacts exponentially to margin errors that are harmless
  // for theta.
  bool step(Rhs& rhs, const std::vector<double>& y0, const std::vector<double>& f0, double h,
            double log_loss0, double rtol, double atol, std::vector<double>& y1,
            std::vector<double>& f1, Objective::Eval& e1, double& err) {
    const double e32 = 6.0 + std::sqrt(2.0);
    factor(h);
    auto& k1 = kst_[0];
    auto& k2 = kst_[1];
    auto& k3 = kst_[2];
    const std::size_t nt = 3 * k_;
    solve(f0, k1);
    for (std::size_t i = 0; i < nt; ++i) tmp_[i] = y0[i] + 0.5 * h * k1[i];
    tmp_[nt] = y0[nt];
    rhs(tmp_.data(), f1s_.data());
    for (std::size_t i = 0; i < nt; ++i) r_[i] = f1s_[i] - k1[i];
    solve(r_, k2);
    for (std::size_t i = 0; i < nt; ++i) {
      k2[i] += k1[i];
      y1[i] = y0[i] + h * k2[i];
    }
    bool finite = true;
    for (std::size_t i = 0; i < nt; ++i) finite = finite && std::isfinite(y1[i]);
    if (!finite) return false;
    y1[nt] = y0[nt];
    e1 = rhs(y1.data(), f1.data());
    if (!std::isfinite(e1.log_loss)) return false;
    y1[nt] = advance_log1p_time(y0[nt], h, log_loss0, e1.log_loss);
    f1[nt] = std::exp(std::min(-y1[nt] - e1.log_loss, 700.0));
    for (std::size_t i = 0; i < nt; ++i) {
      r_[i] = f1[i] - e32 * (k2[i] - f1s_[i]) - 2.0 * (k1[i] - f0[i]);
    }
    solve(r_, k3);
    double acc = 0.0;
    for (std::size_t i = 0; i < nt; ++i) {
      const double ei = h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i]);
      const double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
      acc += (ei / sc) * (ei / sc);
      finite = finite && std::isfinite(f1[i]);
    }
    err = std::sqrt(acc / static_cast<double>(nt));
    return finite && std::isfinite(err);
  }

 private:
  static void project(double& w, double& b, double x) {
    // Remove the component along (x, 1), the normal of the kink constraint.
    const double t = (w * x + b) / (x * x + 1.0);
    w -= t * x;
    b -= t;
  }

  void factor(double h) {
    if (h == factored_h_) return;
    factored_h_ = h;
    const double c = h / (2.0 + std::sqrt(2.0));
    minv_.resize(k_);
    for (std::size_t j = 0; j < k_; ++j) {
      Eigen::Matrix3d A;
      A << 0, 0, alpha_[j], 0, 0, beta_[j], alpha_[j], beta_[j], 0;
      if (held_[j] >= 0) {
        for (int col = 0; col < 3; ++col) project(A(0, col), A(1, col), held_x_[j]);
      }
      minv_[j] = (Eigen::Matrix3d::Identity() - c * A).inverse();
    }
    Z_.resize(U_.rows(), U_.cols());
    for (Eigen::Index col = 0; col < U_.cols(); ++col) apply_minv(U_.col(col), Z_.col(col));
    const Eigen::Index m = U_.cols();
    cdiag_.resize(m);
    for (std::size_t s = 0; s < support_.size(); ++s) cdiag_[static_cast<Eigen::Index>(s)] = c * b_[support_[s]];
    cdiag_[m - 1] = -c;
    Eigen::MatrixXd K = cdiag_.asDiagonal() * (V_.transpose() * Z_);
    K.diagonal().array() += 1.0;
    lu_.compute(K);
  }

  template <class In, class Out>
  void apply_minv(const In& r, Out&& out) const {
    for (std::size_t j = 0; j < k_; ++j) {
      const Eigen::Vector3d v(r[static_cast<Eigen::Index>(j)], r[static_cast<Eigen::Index>(k_ + j)],
                              r[static_cast<Eigen::Index>(2 * k_ + j)]);
      const Eigen::Vector3d o = minv_[j] * v;
      out[static_cast<Eigen::Index>(j)] = o[0];
      out[static_cast<Eigen::Index>(k_ + j)] = o[1];
      out[static_cast<Eigen::Index>(2 * k_ + j)] = o[2];
    }
  }

  // out = (I - c J)^{-1} r.
  void solve(const std::vector<double>& r, std::vector<double>& out) {
    const auto rows = static_cast<Eigen::Index>(3 * k_);
    const Eigen::Map<const Eigen::VectorXd> rt(r.data(), rows);
    Eigen::Map<Eigen::VectorXd> x(out.data(), rows);
    apply_minv(rt, x);
    const Eigen::VectorXd z = lu_.solve((cdiag_.array() * (V_.transpose() * x).array()).matrix());
    x -= Z_ * z;
    out[3 * k_] = 0.0;
  }

  std::size_t k_, dim_;
  std::vector<double> tmp_, f1s_, r_;
  std::vector<double> kst_[3];
  std::vector<double> a_, b_, alpha_, beta_, held_x_;
  std::vector<std::size_t> support_;
  std::vector<int> held_;
  Eigen::MatrixXd U_, V_, Z_;
  Eigen::VectorXd cdiag_;
  std::vector<Eigen::Matrix3d> minv_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  double factored_h_ = -1.0;
};

// Cubic Hermite interpolant of one component over a step of size h.
double hermite(double y0, double f0, double y1, double f1, double h, double s) {
  const double th = s;
  const double th2 = th * th;
  const double th3 = th2 * th;
  return (2 * th3 - 3 * th2 + 1) * y0 + (th3 - 2 * th2 + th) * h * f0 + (-2 * th3 + 3 * th2) * y1 +
         (th3 - th2) * h * f1;
}

// Fraction of the step at which the interpolated value g(s) = target is
// first reached, by bisection; g(0) and g(1) bracket the target.
template <class G>
double bisect_fraction(G g, double target, double tol) {
  const bool below0 = g(0.0) < target;
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if ((g(mid) < target) == below0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

class FlowRunner {
 public:
  FlowRunner(const Params& p0, const Dataset& d, LossKind kind, const FlowConfig& cfg)
      : d_(d),
        cfg_(cfg),
        k_(p0.width()),
        n_(d.size()),
        dim_(3 * p0.width() + 1),
        rhs_(d, kind, cfg.policy, p0.width()),
        dp_(dim_),
        ros_(p0.width(), dim_) {
    if (cfg.rel_tol <= 0.0 || cfg.abs_tol <= 0.0) throw std::invalid_argument("tolerances must be positive");
    if (!(cfg.max_time > 0.0)) throw std::invalid_argument("max_time must be positive");
    y_ = p0.flat();
    y_.push_back(0.0);
    f_.resize(dim_);
    y1_.resize(dim_);
    f1_.resize(dim_);
    pattern_.resize(n_ * k_);
    pattern1_.resize(n_ * k_);
    crossings_.assign(n_ * k_, 0);
    misses_.assign(k_, 0);
    log_inv_n_ = -std::log(static_cast<double>(n_));
    log_half_inv_n_ = -std::log(2.0 * static_cast<double>(n_));
  }

  Trajectory run() {
    e_ = rhs_(y_.data(), f_.data());
    if (!std::isfinite(e_.log_loss)) throw std::invalid_argument("integrate: non-finite initial loss");
    compute_pattern(y_, pattern_);
    tr_.n = n_;
    tr_.loss0 = std::exp(e_.log_loss);
    log_loss0_ = e_.log_loss;
    gnorm_ = norm_of(f_.data(), 3 * k_);
    note_pl(e_.log_loss, gnorm_);
    check_loss_events(e_.log_loss, e_.log_loss, 0.0, 0.0, 0.0);
    push_snapshot();
    if (finished_) return finish();

    const double theta_norm = norm_of(y_.data(), 3 * k_);
    double h = cfg_.integrator == Integrator::kRK4
                   ? cfg_.rk4_step
                   : std::min(0.01, 0.01 * std::max(theta_norm, 1e-3) / std::max(gnorm_, 1e-300));
    const double u_max = std::log1p(cfg_.max_time);

    while (!finished_) {
      if (tr_.steps_accepted >= cfg_.max_steps) {
        stop(Termination::kStepLimit);
        break;
      }
      if (tau_ >= cfg_.max_tau) {
        stop(Termination::kMaxTau);
        break;
      }
      h = std::min(h, cfg_.max_tau - tau_);
      if (h < 1e-15 * std::max(1.0, tau_)) {
        std::ostringstream msg;
        msg << "step size underflow at tau=" << tau_;
        if (last_pair_ >= 0) {
          msg << " near kink of neuron " << last_pair_ % static_cast<long>(k_) << " at sample "
              << last_pair_ / static_cast<long>(k_);
        }
        tr_.diagnostic = msg.str();
        stop(Termination::kStepUnderflow);
        break;
      }

      double err = 0.0;
      Objective::Eval e1;
      bool ok = trial(h, e1, err);
      if (!ok || err > 1.0) {
        ++tr_.steps_rejected;
        h *= ok ? std::max(0.2, 0.9 * std::pow(err, -order_exponent())) : 0.25;
        if (!ok && h < 1e-15 * std::max(1.0, tau_)) {
          tr_.diagnostic = "non-finite state while integrating";
          stop(Termination::kNonFinite);
          break;
        }
        continue;
      }
      double h_next = cfg_.integrator == Integrator::kRK4
                          ? h
                          : h * std::min(5.0, err == 0.0 ? 5.0 : 0.9 * std::pow(err, -order_exponent()));

      // Truncate the step at the first activation change or at the time cap.
      double frac = 1.0;
      bool hits_time = false;
      if (y1_[3 * k_] > u_max) {
        frac = bisect_fraction(
            [&](double s) { return hermite(y_[3 * k_], f_[3 * k_], y1_[3 * k_], f1_[3 * k_], h, s); },
            u_max, 1e-14);
        hits_time = true;
      }
      compute_pattern(y1_, pattern1_);
      if (cfg_.integrator != Integrator::kRK4 && cfg_.locate_kinks) {
        const double s = first_crossing(h);
        if (s < frac) {
          frac = s;
          hits_time = false;
        }
      }
      double h_used = h;
      if (frac < 1.0) {
        const double h_e = std::min(h, h * frac * (1.0 + 1e-10) + cfg_.event_tol);
        if (h_e < h) {
          double err_e = 0.0;
          if (!trial(h_e, e1, err_e) || err_e > 1.0) {
            ++tr_.steps_rejected;
            h = h_e;
            continue;
          }
          h_used = h_e;
          compute_pattern(y1_, pattern1_);
          if (!hits_time) h_next = std::max(h_next, h);
        }
      }
      if (hits_time && y1_[3 * k_] >= u_max - 1e-12 * std::max(1.0, u_max)) {
        accept(h_used, e1, h_next);
        stop(Termination::kMaxTime);
        break;
      }
      accept(h_used, e1, h_next);
      h = std::min(h_next, cap_);
    }
    return finish();
  }

 private:
  bool stiff() const {
    return cfg_.integrator == Integrator::kRosenbrock ||
           (cfg_.integrator == Integrator::kAuto && seen_inv_n_);
  }

  double order_exponent() const { return stiff() ? 1.0 / 3.0 : 0.2; }

  bool trial(double h, Objective::Eval& e1, double& err) {
    if (cfg_.integrator == Integrator::kRK4) {
      err = 0.0;
      return dp_.rk4(rhs_, y_, f_, h, y1_, f1_, e1);
    }
    if (stiff()) {
      if (!jac_ready_) {
        ros_.prepare(rhs_, y_, f_);
        jac_ready_ = true;
      }
      const double rtol =
          std::min(cfg_.stiff_rel_tol, cfg_.stiff_margin_tol / std::max(1.0, e_.min_margin));
      return ros_.step(rhs_, y_, f_, h, e_.log_loss, rtol, cfg_.stiff_abs_tol, y1_, f1_, e1, err);
    }
    return dp_.step(rhs_, y_, f_, h, cfg_.rel_tol, cfg_.abs_tol, y1_, f1_, e1, err);
  }

  void compute_pattern(const std::vector<double>& y, std::vector<std::int8_t>& out) {
    kernels::active().pattern(y.data(), y.data() + k_, k_, d_.xs.data(), n_, out.data());
  }

  // Earliest fraction of the trial step at which some changed pair crosses
  // zero, from the Hermite interpolant; 1 when nothing needs locating.
  double first_crossing(double h) {
    double best = 1.0;
    const double tol = std::max(1e-15, cfg_.event_tol / h);
    for (std::size_t idx = 0; idx < n_ * k_; ++idx) {
      if (pattern_[idx] == pattern1_[idx] || pattern_[idx] == 0) continue;
      if (crossings_[idx] >= cfg_.zeno_limit) continue;
      const std::size_t i = idx / k_;
      const std::size_t j = idx % k_;
      if (held(i, j)) continue;
      const double x = d_.xs[i];
      auto pre = [&](double s) {
        const double w = hermite(y_[j], f_[j], y1_[j], f1_[j], h, s);
        const double b = hermite(y_[k_ + j], f_[k_ + j], y1_[k_ + j], f1_[k_ + j], h, s);
        return w * x + b;
      };
      const double s = bisect_fraction(pre, 0.0, tol);
      if (s < best) {
        best = s;
        last_pair_ = static_cast<long>(idx);
      }
    }
    // A crossing right at the start of the step was already landed on.
    return best <= tol ? 1.0 : best;
  }

  void note_pl(double log_loss, double gol) {
    if (log_loss < log_half_inv_n_) return;
    if (gol == 0.0) {
      tr_.pl_min_pre_t0 = 0.0;
      return;
    }
    const double ratio = std::exp(std::log(0.5) + log_loss + 2.0 * std::log(gol));
    tr_.pl_min_pre_t0 = std::min(tr_.pl_min_pre_t0, ratio);
  }

  void check_loss_events(double ll0, double ll1, double u0, double tau0, double path0) {
    auto interp = [&](double target, double a, double b) {
      if (ll1 == ll0) return b;
      const double w = std::clamp((target - ll0) / (ll1 - ll0), 0.0, 1.0);
      return a + w * (b - a);
    };
    if (!seen_inv_n_ && ll1 < log_inv_n_) {
      seen_inv_n_ = true;
      const double u = interp(log_inv_n_, u0, y_[3 * k_]);
      tr_.t_inv_n = std::expm1(u);
      tr_.events.push_back({EventKind::kLossBelowInvN, tr_.t_inv_n, interp(log_inv_n_, tau0, tau_)});
      force_snapshot_ = true;
    }
    if (!seen_half_ && ll1 <= log_half_inv_n_) {
      seen_half_ = true;
      const double u = interp(log_half_inv_n_, u0, y_[3 * k_]);
      tr_.t0 = std::expm1(u);
      tr_.path_length_pre_t0 = interp(log_half_inv_n_, path0, path_);
      tr_.events.push_back(
          {EventKind::kLossBelowHalfInvN, tr_.t0, interp(log_half_inv_n_, tau0, tau_)});
      force_snapshot_ = true;
      if (cfg_.stop_at_half_inv_n) stop(Termination::kSmallLoss);
    }
  }

  void accept(double h, const Objective::Eval& e1, double h_next) {
    ++tr_.steps_accepted;
    const double ll0 = e_.log_loss;
    const double u0 = y_[3 * k_];
    const double tau0 = tau_;
    const double path0 = path_;
    const double g1 = norm_of(f1_.data(), 3 * k_);
    path_ += 0.5 * (gnorm_ + g1) * h;
    tau_ += h;

    // Kink events, from the pattern change over the accepted step.
    std::vector<std::size_t>& changed = changed_;
    changed.clear();
    for (std::size_t idx = 0; idx < n_ * k_; ++idx) {
      if (pattern_[idx] == pattern1_[idx]) continue;
      if (held(idx / k_, idx % k_)) continue;
      // Only count transitions that leave or enter the active side.
      const bool was_on = pattern_[idx] > 0;
      const bool is_on = pattern1_[idx] > 0;
      if (was_on == is_on) continue;
      ++tr_.kink_crossings;
      changed.push_back(idx);
      if (crossings_[idx] < 0xFFFF) ++crossings_[idx];
      if (tr_.events.size() < cfg_.max_stored_events) {
        tr_.events.push_back({EventKind::kKinkCrossing, std::expm1(y1_[3 * k_]), tau_,
                              static_cast<int>(idx % k_), static_cast<int>(idx / k_)});
      }
    }

    y_.swap(y1_);
    f_.swap(f1_);
    pattern_.swap(pattern1_);
    e_ = e1;
    update_sliding(changed, h_next);
    jac_ready_ = false;
    gnorm_ = norm_of(f_.data(), 3 * k_);
    if (!seen_half_) note_pl(e_.log_loss, gnorm_);
    check_loss_events(ll0, e_.log_loss, u0, tau0, path0);

    if (cfg_.loss_floor > 0.0 && e_.log_loss <= std::log(cfg_.loss_floor)) {
      stop(Termination::kLossFloor);
    } else if (e_.log_loss <= log_loss0_ - cfg_.max_halvings * std::log(2.0)) {
      stop(Termination::kHalvingCap);
    }

    const Snapshot& last = tr_.snapshots.back();
    const double norm = norm_of(y_.data(), 3 * k_);
    const double dll = std::abs(e_.log_loss - last.log_loss);
    const bool trigger =
        force_snapshot_ || finished_ || tau_ - last.tau >= cfg_.snap_dtau ||
        dll >= std::max(cfg_.snap_dlog_loss, 0.01 * std::abs(last.log_loss)) ||
        (norm > 0.0 && last.norm > 0.0 && std::abs(std::log(norm / last.norm)) >= cfg_.snap_dlog_norm);
    if (trigger) {
      push_snapshot();
      force_snapshot_ = false;
      check_plateau();
      if (!finished_ && cfg_.stop_when && cfg_.stop_when(tr_.snapshots.back())) {
        stop(Termination::kCriterion);
      }
    }
  }

  bool held(std::size_t i, std::size_t j) const {
    return rhs_.slide[j] == static_cast<int>(i);
  }

  // Releases held pairs whose kink stopped attracting, and holds pairs that
  // just crossed into a kink attracting from both sides. The coefficients in
  // rhs_ belong to y_ (its last evaluation was at the accepted state).
  void update_sliding(const std::vector<std::size_t>& changed, double h_next) {
    bool modified = false;
    // A pair is released once its kink repels for kReleaseSteps accepted
    // steps in a row. Late in training margins are ~|theta|^2 and a state
    // error within tolerance can zero a softmax weight for one step, which
    // would otherwise release pairs spuriously.
    constexpr int kReleaseSteps = 3;
    for (std::size_t j = 0; j < k_; ++j) {
      const int i = rhs_.slide[j];
      if (i < 0) continue;
      if (Rhs::slides(rhs_.control(y_.data(), j, static_cast<std::size_t>(i)))) {
        misses_[j] = 0;
        continue;
      }
      if (++misses_[j] < kReleaseSteps) continue;
      misses_[j] = 0;
      rhs_.slide[j] = -1;
      const double pre = y_[j] * d_.xs[i] + y_[k_ + j];
      pattern_[static_cast<std::size_t>(i) * k_ + j] =
          static_cast<std::int8_t>((pre > 0.0) - (pre < 0.0));
      modified = true;
    }
    for (std::size_t idx : changed) {
      const std::size_t i = idx / k_;
      const std::size_t j = idx % k_;
      if (rhs_.slide[j] >= 0 || std::abs(y_[j]) <= kDeadSlope) continue;
      if (!Rhs::slides(rhs_.control(y_.data(), j, i))) continue;
      rhs_.slide[j] = static_cast<int>(i);
      ++tr_.sliding_entries;
      modified = true;
    }
    // A pair can also creep up on an attracting kink without an accepted
    // step ever crossing it (trial steps that cross are rejected). Cap the
    // next step at its predicted hit time and hold it once it is there.
    cap_ = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k_; ++j) {
      if (rhs_.slide[j] >= 0 || std::abs(y_[j]) <= kDeadSlope) continue;
      const double rate_w = f_[j];
      const double rate_b = f_[k_ + j];
      for (std::size_t i = 0; i < n_; ++i) {
        const double x = d_.xs[i];
        const double pre = y_[j] * x + y_[k_ + j];
        const double rate = rate_w * x + rate_b;
        if (!(pre * rate < 0.0)) continue;
        const double t_hit = -pre / rate;
        if (t_hit >= h_next) continue;
        if (!Rhs::slides(rhs_.control(y_.data(), j, i))) continue;
        const double scale = std::abs(y_[j] * x) + std::abs(y_[k_ + j]);
        if (std::abs(pre) <= 1e-9 * scale || t_hit <= 1e-6 * h_next) {
          rhs_.slide[j] = static_cast<int>(i);
          ++tr_.sliding_entries;
          modified = true;
          break;
        }
        cap_ = std::min(cap_, t_hit);
      }
    }
    // Put held pairs exactly on their kinks; steps keep the linear
    // constraint up to rounding, so this moves them by rounding only unless
    // the pair was just captured.
    for (std::size_t j = 0; j < k_; ++j) {
      if (rhs_.slide[j] >= 0) y_[k_ + j] = -(y_[j] * d_.xs[rhs_.slide[j]]);
    }
    if (modified) e_ = rhs_(y_.data(), f_.data());
  }

  void push_snapshot() {
    Snapshot s;
    s.tau = tau_;
    s.log1p_t = y_[3 * k_];
    s.t = std::expm1(s.log1p_t);
    std::vector<double> theta(y_.begin(), y_.begin() + 3 * k_);
    s.norm = norm_of(theta.data(), theta.size());
    s.log_loss = e_.log_loss;
    s.loss = std::exp(e_.log_loss);
    s.min_margin = e_.min_margin;
    s.normalized_margin = s.norm > 0.0 ? e_.min_margin / (s.norm * s.norm) : 0.0;
    s.grad_over_loss_norm = gnorm_;
    s.gradient_norm = std::exp(e_.log_loss + std::log(gnorm_));
    s.path_length = path_;
    s.direction = theta;
    if (s.norm > 0.0) {
      for (double& c : s.direction) c /= s.norm;
    }
    if (cfg_.keep_params) s.params = Params::from_flat(theta);
    tr_.snapshots.push_back(std::move(s));
  }

  void check_plateau() {
    if (finished_ || !cfg_.stop_at_plateau) return;
    if (cfg_.plateau_needs_separation && !seen_inv_n_) return;
    const auto& snaps = tr_.snapshots;
    const Snapshot& cur = snaps.back();
    if (!(cur.norm > 0.0)) return;
    // Window start: the latest snapshot at least plateau_growth times smaller.
    std::size_t start = snaps.size();
    for (std::size_t i = snaps.size(); i-- > 0;) {
      if (snaps[i].norm * cfg_.plateau_growth <= cur.norm) {
        start = i;
        break;
      }
    }
    if (start == snaps.size() || snaps.size() - start < cfg_.direction_window) return;
    // Half the threshold to the current direction bounds every pairwise angle.
    for (std::size_t i = start; i + 1 < snaps.size(); ++i) {
      if (angle_between(snaps[i].direction, cur.direction) >= 0.5 * cfg_.plateau_angle) return;
    }
    tr_.events.push_back({EventKind::kPlateau, cur.t, cur.tau});
    stop(Termination::kPlateau);
  }

  void stop(Termination why) {
    finished_ = true;
    tr_.termination = why;
  }

  Trajectory finish() {
    if (tr_.snapshots.back().tau != tau_) push_snapshot();
    tr_.rhs_evaluations = rhs_.evals;
    if (!seen_half_) tr_.path_length_pre_t0 = path_;
    return std::move(tr_);
  }

  const Dataset& d_;
  const FlowConfig& cfg_;
  std::size_t k_, n_, dim_;
  Rhs rhs_;
  DormandPrince dp_;
  Rosenbrock ros_;
  bool jac_ready_ = false;
  std::vector<double> y_, f_, y1_, f1_;
  std::vector<std::int8_t> pattern_, pattern1_;
  std::vector<std::uint16_t> crossings_;
  std::vector<std::size_t> changed_;
  std::vector<int> misses_;
  double cap_ = std::numeric_limits<double>::infinity();
  Objective::Eval e_;
  Trajectory tr_;
  double tau_ = 0.0;
  double path_ = 0.0;
  double gnorm_ = 0.0;
  double log_loss0_ = 0.0;
  double log_inv_n_ = 0.0;
  double log_half_inv_n_ = 0.0;
  bool seen_inv_n_ = false;
  bool seen_half_ = false;
  bool force_snapshot_ = false;
  bool finished_ = false;
  long last_pair_ = -1;
};

}  // namespace

Trajectory integrate(const Params& p0, const Dataset& d, LossKind kind, const FlowConfig& cfg) {
  FlowRunner runner(p0, d, kind, cfg);
  return runner.run();
}

DirectionEstimate direction_of(const Trajectory& tr, std::size_t window) {
  if (tr.snapshots.empty()) throw std::invalid_argument("direction_of: empty trajectory");
  window = std::max<std::size_t>(1, std::min(window, tr.snapshots.size()));
  const std::size_t start = tr.snapshots.size() - window;
  double residual = 0.0;
  for (std::size_t a = start; a < tr.snapshots.size(); ++a) {
    for (std::size_t b = a + 1; b < tr.snapshots.size(); ++b) {
      residual = std::max(residual,
                          angle_between(tr.snapshots[a].direction, tr.snapshots[b].direction));
    }
  }
  return DirectionEstimate{tr.snapshots.back().direction, residual, window};
}

PLDiagnostic pl_diagnostic(const Trajectory& tr, const Dataset& d) {
  PLDiagnostic out;
  out.lambda_hat = tr.pl_min_pre_t0;
  const double half_inv_n = 0.5 / static_cast<double>(d.size());
  for (const Snapshot& s : tr.snapshots) {
    const double ratio = s.grad_over_loss_norm == 0.0
                             ? 0.0
                             : std::exp(std::log(0.5) + s.log_loss + 2.0 * std::log(s.grad_over_loss_norm));
    out.points.push_back({s.t, ratio});
    if (s.loss >= half_inv_n) out.lambda_hat = std::min(out.lambda_hat, ratio);
  }
  return out;
}

PathLength trajectory_length(const Trajectory& tr) {
  if (tr.snapshots.empty()) throw std::invalid_argument("trajectory_length: empty trajectory");
  PathLength out{};
  out.total = tr.snapshots.back().path_length;
  out.pre_t0 = tr.path_length_pre_t0;
  const Params& p0 = tr.snapshots.front().params;
  const Params& p1 = tr.snapshots.back().params;
  if (p0.width() == 0 || p1.width() == 0) {
    out.displacement = std::numeric_limits<double>::quiet_NaN();
    out.max_hidden_shift = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const auto a = p0.flat();
  const auto b = p1.flat();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  out.displacement = std::sqrt(s);
  for (const Snapshot& snap : tr.snapshots) {
    for (std::size_t j = 0; j < p0.width(); ++j) {
      const double dw = snap.params.w()[j] - p0.w()[j];
      const double db = snap.params.b()[j] - p0.b()[j];
      out.max_hidden_shift = std::max(out.max_hidden_shift, std::hypot(dw, db));
    }
  }
  return out;
}

nlohmann::ordered_json to_json(const Snapshot& s, bool with_params) {
  nlohmann::ordered_json j;
  j["t"] = s.t;  // +inf serializes as null; log1p_t is always finite
  j["log1p_t"] = s.log1p_t;
  j["tau"] = s.tau;
  j["loss"] = s.loss;
  j["log_loss"] = s.log_loss;
  j["min_margin"] = s.min_margin;
  j["normalized_margin"] = s.normalized_margin;
  j["gradient_norm"] = s.gradient_norm;
  j["grad_over_loss_norm"] = s.grad_over_loss_norm;
  j["norm"] = s.norm;
  j["path_length"] = s.path_length;
  if (with_params && s.params.width() > 0) {
    nlohmann::ordered_json p;
    to_json(p, s.params);
    j["params"] = p;
  }
  return j;
}

nlohmann::ordered_json summary_json(const Trajectory& tr) {
  nlohmann::ordered_json j;
  j["termination"] = to_string(tr.termination);
  if (!tr.diagnostic.empty()) j["diagnostic"] = tr.diagnostic;
  j["steps_accepted"] = tr.steps_accepted;
  j["steps_rejected"] = tr.steps_rejected;
  j["rhs_evaluations"] = tr.rhs_evaluations;
  j["snapshots"] = tr.snapshots.size();
  j["kink_crossings"] = tr.kink_crossings;
  j["sliding_entries"] = tr.sliding_entries;
  j["loss0"] = tr.loss0;
  j["t_inv_n"] = tr.t_inv_n;
  j["t0"] = tr.t0;
  const Snapshot& last = tr.last();
  j["final"] = to_json(last, false);
  j["final_direction"] = last.direction;
  j["lambda_hat"] = tr.pl_min_pre_t0;
  j["path_length"] = last.path_length;
  j["path_length_pre_t0"] = tr.path_length_pre_t0;
  auto events = nlohmann::ordered_json::array();
  for (const FlowEvent& e : tr.events) {
    if (e.kind == EventKind::kKinkCrossing) continue;
    events.push_back({{"kind", to_string(e.kind)}, {"t", e.t}, {"tau", e.tau}});
  }
  j["events"] = events;
  j["plateau_proxy"] = "max angle < threshold over a window of fixed norm growth";
  return j;
}

void write_jsonl(std::ostream& os, const Trajectory& tr) {
  for (const Snapshot& s : tr.snapshots) os << to_json(s).dump() << '\n';
}

void write_csv(std::ostream& os, const Trajectory& tr) {
  os << "t,tau,loss,log_loss,min_margin,norm\n";
  os.precision(17);
  for (const Snapshot& s : tr.snapshots) {
    os << s.t << ',' << s.tau << ',' << s.loss << ',' << s.log_loss << ',' << s.min_margin << ','
       << s.norm << '\n';
  }
}

}  // namespace relugf
