#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "relugf/data.hpp"
#include "relugf/params.hpp"
#include "relugf/piecewise.hpp"

namespace relugf {

/// Slope jumps at most this fraction of the largest |slope| are spurious.
inline constexpr double kSpuriousJumpTol = 1e-8;

enum class BoundaryKind { kIncreases, kDecreases, kSpurious };
std::string to_string(BoundaryKind kind);

struct RegionReport {
  Interval domain;
  std::vector<double> boundaries;  // location-merged breakpoints inside the domain
  std::vector<double> jumps;       // slope right minus slope left
  std::vector<BoundaryKind> kinds;
  std::size_t region_count = 1;    // non-spurious boundaries + 1
  double jump_tolerance = kSpuriousJumpTol;
};

RegionReport count_regions(const Params& p, Interval domain,
                           double jump_tolerance = kSpuriousJumpTol);

/// Counting domain [-R-1, R+1].
inline Interval region_domain(double support_radius) {
  return {-support_radius - 1.0, support_radius + 1.0};
}

struct ActivationInterval {
  double lo;  // -inf for the left outer interval
  double hi;  // +inf for the right outer interval
  std::size_t count;
  std::size_t decreasing;
  std::size_t increasing;
};

struct ActivationReport {
  std::vector<std::size_t> margin_one;       // indices with margin <= 1 + tau
  std::vector<double> points;                // distinct activation points
  std::vector<ActivationInterval> intervals;  // outer, inner..., outer
  /// Per same-label run of margin-one points, split at 0: the number of
  /// activation points in [x_a, x_b] where the derivative bends away from
  /// the label (decreasing for +1 runs, increasing for -1 runs).
  std::vector<std::size_t> corner_counts;
  std::size_t max_inner = 0;
  std::size_t max_outer = 0;
  std::size_t max_corners = 0;
};

/// Activation points are -b_j/w_j over neurons with |w_j| above the dead
/// threshold and |v_j w_j| above jump_tolerance times the largest one,
/// merged by location. `p` must be normalized to margin one.
ActivationReport activation_points_per_interval(const Params& p, const Dataset& d, double tau,
                                                double jump_tolerance = kSpuriousJumpTol);

struct RegionBoundCheck {
  bool pass;
  long bound;  // 32 r + 67
  long slack;  // bound - region_count
};

RegionBoundCheck region_bound_check(const RegionReport& report, int r);

nlohmann::ordered_json to_json(const RegionReport& r);
nlohmann::ordered_json to_json(const ActivationReport& a);

}  // namespace relugf
