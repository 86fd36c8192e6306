#pragma once

#include <cstddef>
#include <vector>

#include "relugf/params.hpp"

namespace relugf {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double length() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

/// Breakpoints closer than this times max(1, |domain|) are merged.
inline constexpr double kBreakpointMergeTol = 1e-10;
/// Adjacent pieces whose slopes agree to this relative tolerance are merged.
inline constexpr double kSlopeMergeTol = 1e-10;

/// Continuous piecewise-linear function on a closed interval, stored as
/// breakpoints, one slope per piece, and the value at the left end.
class PiecewiseLinear {
 public:
  PiecewiseLinear(Interval domain, std::vector<double> breakpoints,
                  std::vector<double> slopes, double value_at_anchor);

  const Interval& domain() const { return domain_; }
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<double>& slopes() const { return slopes_; }
  double anchor() const { return domain_.lo; }
  double value_at_anchor() const { return value_at_anchor_; }
  std::size_t pieces() const { return slopes_.size(); }

  double operator()(double x) const;

  /// Values at lo, every breakpoint, and hi.
  std::vector<double> node_values() const;

 private:
  Interval domain_;
  std::vector<double> breakpoints_;
  std::vector<double> slopes_;
  double value_at_anchor_;
};

/// Piecewise form with breakpoints merged by location only. Adjacent slopes
/// may coincide; callers decide which boundaries are genuine.
struct RawPieces {
  Interval domain;
  std::vector<double> breakpoints;
  std::vector<double> slopes;
  double value_at_anchor = 0.0;
};

RawPieces extract_pieces(const Params& p, Interval domain);

PiecewiseLinear to_piecewise(const Params& p, Interval domain);

/// Points in the domain where the label sign(f) flips, with sign(z) = +1 for
/// z > 0 and -1 otherwise. Isolated zeros do not flip the label; a maximal
/// zero interval flips it at whichever end borders a positive piece.
std::vector<double> sign_changes(const PiecewiseLinear& f, Interval domain);

}  // namespace relugf
