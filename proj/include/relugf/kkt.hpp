#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "relugf/data.hpp"
#include "relugf/flow.hpp"
#include "relugf/init.hpp"
#include "relugf/loss.hpp"
#include "relugf/params.hpp"

namespace relugf {

// Max-margin problem: min |theta|^2 / 2 subject to y_i N(x_i) >= 1.

/// scale(p, alpha) with alpha = (min margin)^(-1/2). Throws if the min
/// margin is not positive.
Params normalize_to_margin_one(const Params& p, const Dataset& d);

/// Gradient of N(x) in theta, flat layout, with the ReLU derivative at 0
/// taken from `policy`.
std::vector<double> output_gradient(const Params& p, double x, SubgradientPolicy policy);

struct KKTCertificate {
  std::vector<double> lambdas;         // one per example, zero off the active set
  std::vector<std::size_t> active_set;  // 0-based indices with margin <= 1 + tau
  double stationarity_residual = 0.0;   // |theta - sum lambda_i y_i grad|/|theta|
  double complementarity_residual = 0.0;  // max lambda_i |y_i N(x_i) - 1|
  double feasibility_margin = 0.0;      // min y_i N(x_i) - 1
  bool uninformative = false;           // every active gradient is zero
  double kink_value = 0.0;
  std::size_t kink_pairs = 0;  // (active example, neuron) pairs treated as on the kink
  bool hull_truncated = false;  // some example had more than kMaxHullKinks kinks
  double tau = 0.0;

  bool is_eps_kkt(double eps) const {
    return !uninformative && stationarity_residual <= eps && complementarity_residual <= eps &&
           feasibility_margin >= -eps;
  }
};

inline constexpr double kKinkTol = 1e-9;
inline constexpr std::size_t kMaxHullKinks = 6;

/// Certificate for a point already normalized to margin one. An active
/// example whose preactivation at neuron j (v_j != 0) is within kink_tol of
/// zero, relative to |w_j x_i| + |b_j|, may use any ReLU derivative in
/// [0, 1] there (the Clarke hull). The relaxed problem with independent
/// per-kink weights is tried first; if its weights leave the hull, the hull
/// vertices are enumerated (up to kMaxHullKinks kinks per example).
/// A negative kink_tol uses the policy's value only.
KKTCertificate certify(const Params& p, const Dataset& d, SubgradientPolicy policy = {},
                       double tau = 1e-3, double kink_tol = kKinkTol);

nlohmann::ordered_json to_json(const KKTCertificate& c);

struct KKTTrackPoint {
  double t;
  double log1p_t;
  double stationarity;
  double complementarity;
  double feasibility;
  bool positive_margin;
};

/// Certificates of the margin-normalized snapshots with positive margin.
/// Snapshots before `from_index` are skipped.
std::vector<KKTTrackPoint> track_kkt_along(const Trajectory& tr, const Dataset& d,
                                           SubgradientPolicy policy = {}, double tau = 1e-3,
                                           std::size_t from_index = 0);

/// True when every example has margin at least 1 - tol.
bool is_margin_feasible(const Params& p, const Dataset& d, double tol = 1e-12);

struct WitnessResult {
  Params best;            // margin-normalized
  double squared_norm;    // |best|^2
  std::size_t attempts;
  std::size_t feasible;   // runs that separated the data
};

/// Runs the flow from `attempts` random inits of width k (seeds seed0,
/// seed0+1, ...), normalizes each separating endpoint to margin one, and keeps
/// the smallest norm.
WitnessResult witness_search(const Dataset& d, std::size_t k, std::size_t attempts,
                             std::uint64_t seed0, const InitConfig& init, const FlowConfig& flow,
                             LossKind kind = LossKind::kExponential);

}  // namespace relugf
