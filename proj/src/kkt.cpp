#include "relugf/kkt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "relugf/nnls.hpp"

namespace relugf {

Params normalize_to_margin_one(const Params& p, const Dataset& d) {
  const auto q = margins(p, d);
  const double mmin = *std::min_element(q.begin(), q.end());
  if (!(mmin > 0.0)) throw std::invalid_argument("normalize_to_margin_one: margin not positive");
  return scale(p, 1.0 / std::sqrt(mmin));
}

std::vector<double> output_gradient(const Params& p, double x, SubgradientPolicy policy) {
  const std::size_t k = p.width();
  std::vector<double> g(3 * k);
  for (std::size_t j = 0; j < k; ++j) {
    const double pre = p.w()[j] * x + p.b()[j];
    const double s = pre > 0.0 ? 1.0 : (pre == 0.0 ? policy.kink_value : 0.0);
    g[j] = p.v()[j] * s * x;
    g[k + j] = p.v()[j] * s;
    g[2 * k + j] = std::max(0.0, pre);
  }
  return g;
}

KKTCertificate certify(const Params& p, const Dataset& d, SubgradientPolicy policy, double tau,
                       double kink_tol) {
  if (!(tau >= 0.0)) throw std::invalid_argument("certify: tau must be nonnegative");
  const std::size_t n = d.size();
  const std::size_t k = p.width();
  const auto q = margins(p, d);
  KKTCertificate c;
  c.kink_value = policy.kink_value;
  c.tau = tau;
  c.lambdas.assign(n, 0.0);
  c.feasibility_margin = *std::min_element(q.begin(), q.end()) - 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (q[i] <= 1.0 + tau) c.active_set.push_back(i);
  }

  // Kink neurons of each active example.
  std::vector<std::vector<std::size_t>> kinks(c.active_set.size());
  for (std::size_t a = 0; a < c.active_set.size(); ++a) {
    if (kink_tol < 0.0) break;
    const double x = d.xs[c.active_set[a]];
    for (std::size_t j = 0; j < k; ++j) {
      const double pre = p.w()[j] * x + p.b()[j];
      const double scale = std::abs(p.w()[j] * x) + std::abs(p.b()[j]);
      if (p.v()[j] != 0.0 && std::abs(pre) <= kink_tol * scale) kinks[a].push_back(j);
    }
    c.kink_pairs += kinks[a].size();
  }

  const std::vector<double> theta = p.flat();
  const auto m = static_cast<Eigen::Index>(theta.size());
  const Eigen::Map<const Eigen::VectorXd> th(theta.data(), m);
  const double theta_norm = th.norm();

  // Gradient of margin i with derivative s_j at its kink neurons (others by sign).
  auto margin_gradient = [&](std::size_t a, auto s_of) {
    const std::size_t i = c.active_set[a];
    std::vector<double> g = output_gradient(p, d.xs[i], policy);
    for (std::size_t b = 0; b < kinks[a].size(); ++b) {
      const std::size_t j = kinks[a][b];
      const double s = s_of(b);
      g[j] = p.v()[j] * s * d.xs[i];
      g[k + j] = p.v()[j] * s;
    }
    Eigen::VectorXd col(m);
    for (Eigen::Index r = 0; r < m; ++r) col[r] = d.ys[i] * g[static_cast<std::size_t>(r)];
    return col;
  };

  // Route 1: lambda_i g_i(s = 0) + sum_j mu_ij e_ij with lambda, mu >= 0,
  // where e_ij is the s_j = 1 increment. Exact when mu_ij <= lambda_i.
  std::vector<Eigen::VectorXd> cols;
  std::vector<std::size_t> owner;
  std::vector<long> base_of;  // column of lambda for mu columns, -1 for lambda columns
  for (std::size_t a = 0; a < c.active_set.size(); ++a) {
    const long base = static_cast<long>(cols.size());
    cols.push_back(margin_gradient(a, [](std::size_t) { return 0.0; }));
    owner.push_back(a);
    base_of.push_back(-1);
    for (std::size_t b = 0; b < kinks[a].size(); ++b) {
      cols.push_back(margin_gradient(a, [&](std::size_t bb) { return bb == b ? 1.0 : 0.0; }) - cols[base]);
      owner.push_back(a);
      base_of.push_back(base);
    }
  }
  auto solve = [&](bool vertex_weights) {
    Eigen::MatrixXd H(m, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t a = 0; a < cols.size(); ++a) H.col(static_cast<Eigen::Index>(a)) = cols[a];
    c.uninformative = H.size() == 0 || H.cwiseAbs().maxCoeff() == 0.0;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(H.cols());
    if (H.cols() > 0) x = nnls(H, th).x;
    std::fill(c.lambdas.begin(), c.lambdas.end(), 0.0);
    bool feasible = true;
    for (std::size_t a = 0; a < cols.size(); ++a) {
      const double xa = x[static_cast<Eigen::Index>(a)];
      if (vertex_weights || base_of[a] < 0) {
        c.lambdas[c.active_set[owner[a]]] += xa;
      } else {
        const double lam = x[base_of[a]];
        feasible = feasible && xa <= lam * (1.0 + 1e-9) + 1e-12;
      }
    }
    return std::pair<Eigen::VectorXd, bool>(th - H * x, feasible);
  };
  auto [residual, feasible] = solve(false);

  // Route 2: every vertex of the hull gets a column and lambda_i is the sum
  // of its weights; capped at kMaxHullKinks kink neurons per example.
  if (!feasible) {
    cols.clear();
    owner.clear();
    base_of.clear();
    for (std::size_t a = 0; a < c.active_set.size(); ++a) {
      if (kinks[a].size() > kMaxHullKinks) {
        c.hull_truncated = true;
        kinks[a].resize(kMaxHullKinks);
      }
      for (std::size_t mask = 0; mask < (std::size_t{1} << kinks[a].size()); ++mask) {
        cols.push_back(margin_gradient(a, [&](std::size_t b) { return (mask >> b) & 1 ? 1.0 : 0.0; }));
        owner.push_back(a);
        base_of.push_back(-1);
      }
    }
    residual = solve(true).first;
  }
  c.stationarity_residual = theta_norm > 0.0 ? residual.norm() / theta_norm : residual.norm();
  for (std::size_t i = 0; i < n; ++i) {
    c.complementarity_residual =
        std::max(c.complementarity_residual, c.lambdas[i] * std::abs(q[i] - 1.0));
  }
  return c;
}

nlohmann::ordered_json to_json(const KKTCertificate& c) {
  return nlohmann::ordered_json{{"lambdas", c.lambdas},
                                {"active_set", c.active_set},
                                {"stationarity_residual", c.stationarity_residual},
                                {"complementarity_residual", c.complementarity_residual},
                                {"feasibility_margin", c.feasibility_margin},
                                {"uninformative", c.uninformative},
                                {"kink_value", c.kink_value},
                                {"kink_pairs", c.kink_pairs},
                                {"hull_truncated", c.hull_truncated},
                                {"tau", c.tau}};
}

std::vector<KKTTrackPoint> track_kkt_along(const Trajectory& tr, const Dataset& d,
                                           SubgradientPolicy policy, double tau,
                                           std::size_t from_index) {
  std::vector<KKTTrackPoint> out;
  for (std::size_t s = from_index; s < tr.snapshots.size(); ++s) {
    const Snapshot& snap = tr.snapshots[s];
    if (snap.params.width() == 0) continue;
    KKTTrackPoint pt{snap.t, snap.log1p_t, std::numeric_limits<double>::quiet_NaN(),
                     std::numeric_limits<double>::quiet_NaN(), snap.min_margin, false};
    if (snap.min_margin > 0.0) {
      const KKTCertificate c = certify(normalize_to_margin_one(snap.params, d), d, policy, tau);
      pt = {snap.t, snap.log1p_t, c.stationarity_residual, c.complementarity_residual,
            c.feasibility_margin, true};
    }
    out.push_back(pt);
  }
  return out;
}

bool is_margin_feasible(const Params& p, const Dataset& d, double tol) {
  const auto q = margins(p, d);
  return std::all_of(q.begin(), q.end(), [&](double m) { return m >= 1.0 - tol; });
}

WitnessResult witness_search(const Dataset& d, std::size_t k, std::size_t attempts,
                             std::uint64_t seed0, const InitConfig& init, const FlowConfig& flow,
                             LossKind kind) {
  WitnessResult out{Params::zeros(k), std::numeric_limits<double>::infinity(), attempts, 0};
  for (std::size_t a = 0; a < attempts; ++a) {
    InitConfig c = init;
    c.k = k;
    c.seed = seed0 + a;
    const Trajectory tr = integrate(sample_init(c), d, kind, flow);
    const Snapshot& last = tr.last();
    if (!(last.min_margin > 0.0)) continue;
    ++out.feasible;
    const Params normed = normalize_to_margin_one(last.params, d);
    const double sq = normed.squared_norm();
    if (sq < out.squared_norm) {
      out.squared_norm = sq;
      out.best = normed;
    }
  }
  return out;
}

}  // namespace relugf
