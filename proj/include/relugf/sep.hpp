#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relugf/data.hpp"
#include "relugf/loss.hpp"
#include "relugf/params.hpp"

namespace relugf {

struct SeparabilityConstants {
  double gamma = 0.0;  // data gap at label switches
  double m = 0.0;      // min |w| over witness neurons
  double M = 0.0;      // max |b| over witness neurons (at least m)
  double q = 0.0;      // min gap between consecutive witness breakpoints
  double Q = 0.0;      // max of gaps, |breakpoints| of the all-active four, hops between intervals
};

struct IntervalWitness {
  std::size_t neurons[3];
  double beta[3];
};

struct SeparabilityResult {
  bool separable = false;
  SeparabilityConstants constants;
  std::vector<IntervalWitness> witnesses;  // one per constant-label interval
  std::vector<std::size_t> all_active;      // the four neurons of the second item
  int failed_item = 0;                      // 0 when separable
  int failed_interval = -1;                 // 0-based, or -1
  std::string message;
};

/// Greedy witness: in each interval the leftmost and rightmost breakpoints
/// and the breakpoint between them maximizing the smaller gap; the
/// all-active neurons closest to the origin on each side.
SeparabilityResult check_separability(const Params& p, const Dataset& d,
                                      double support_radius = 1.0);

/// gamma^2 q^2 m^6 / (259200 n^4 Q^2 M^4).
double grad_lower_bound(const SeparabilityConstants& c, std::size_t n);

struct MaskingReport {
  std::size_t patterns = 0;
  bool all_invertible = true;
  double max_inverse_norm = 0.0;  // spectral norm
};

/// Exhaustive over the 2^(d-1) patterns: first row all ones, row i (1-based)
/// either i-1 leading ones then zeros or i-1 leading zeros then ones.
MaskingReport masking_inverse_bound(int d);

/// Pattern number `mask` (bit i-2 selects the leading-zeros form of row i).
std::vector<std::vector<double>> masking_matrix(int d, unsigned mask);

struct NeighborhoodSpec {
  Params center;
  double delta = 0.0;
};

/// Closed balls of radius delta around every hidden (w_j, b_j); output
/// weights are unconstrained. Throws on a width mismatch.
bool neighborhood_membership(const NeighborhoodSpec& spec, const Params& p);

struct TheoreticalConstants {
  double k_min;
  double sigma_h_min;
  double sigma_o_max;
  double delta;  // hidden neighborhood radius
  double k_used;  // width plugged into the sigma formulas
};

/// Reference magnitudes for width, init scales and neighborhood radius.
/// `k` <= 0 uses ceil(k_min).
TheoreticalConstants theoretical_constants(const TeacherSpec& spec, std::size_t n, double delta,
                                           double k = 0.0);

/// 3e-11 delta^2 rho^2 sigma_h^2 / (n^6 r^2 C^2 R^8).
double pl_proposition_bound(const TeacherSpec& spec, std::size_t n, double delta, double sigma_h);

struct EventProbability {
  double p_hat;
  double standard_error;
  double exact;  // quadrature of the event's density
  double bound;  // eps / (512 R^4)
  bool pass;     // p_hat >= bound - 4 SE
};

/// Monte Carlo for the event w in (s/R, 2s/R), -b/w in (a, a + eps) with
/// w, b ~ N(0, s^2).
EventProbability event_probability_mc(double a, double eps, double support_radius,
                                       std::size_t samples, std::uint64_t seed);

struct PLSample {
  std::size_t drawn = 0;
  std::size_t qualified = 0;  // loss >= 1/(2n)
  double min_half_grad_sq = 0.0;
  double bound = 0.0;
  std::size_t violations = 0;
};

/// Draws points of the hidden neighborhood of theta0 (hidden pairs moved
/// uniformly within the disc of radius delta, outputs uniform in
/// [-3 sigma_o, 3 sigma_o]) and compares half the squared gradient norm with
/// `bound` wherever the loss is at least 1/(2n).
PLSample sample_pl_points(const Params& theta0, const Dataset& d, double delta, double sigma_o,
                          double bound, std::size_t count, std::uint64_t seed,
                          LossKind kind = LossKind::kExponential);

nlohmann::ordered_json to_json(const SeparabilityResult& s);

}  // namespace relugf
