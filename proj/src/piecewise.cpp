#include "relugf/piecewise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace relugf {

PiecewiseLinear::PiecewiseLinear(Interval domain, std::vector<double> breakpoints,
                                 std::vector<double> slopes, double value_at_anchor)
    : domain_(domain),
      breakpoints_(std::move(breakpoints)),
      slopes_(std::move(slopes)),
      value_at_anchor_(value_at_anchor) {
  if (!(domain_.lo <= domain_.hi)) throw std::invalid_argument("empty domain");
  if (slopes_.size() != breakpoints_.size() + 1) {
    throw std::invalid_argument("need exactly one slope per piece");
  }
  for (std::size_t i = 1; i < breakpoints_.size(); ++i) {
    if (!(breakpoints_[i - 1] < breakpoints_[i])) {
      throw std::invalid_argument("breakpoints must be strictly increasing");
    }
  }
}

double PiecewiseLinear::operator()(double x) const {
  double value = value_at_anchor_;
  double left = domain_.lo;
  for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
    if (x <= breakpoints_[i]) return value + slopes_[i] * (x - left);
    value += slopes_[i] * (breakpoints_[i] - left);
    left = breakpoints_[i];
  }
  return value + slopes_.back() * (x - left);
}

std::vector<double> PiecewiseLinear::node_values() const {
  std::vector<double> out;
  out.reserve(breakpoints_.size() + 2);
  double value = value_at_anchor_;
  double left = domain_.lo;
  out.push_back(value);
  for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
    value += slopes_[i] * (breakpoints_[i] - left);
    left = breakpoints_[i];
    out.push_back(value);
  }
  out.push_back(value + slopes_.back() * (domain_.hi - left));
  return out;
}

namespace {

double slope_at(const Params& p, double x) {
  double s = 0.0;
  for (std::size_t j = 0; j < p.width(); ++j) {
    if (std::abs(p.w()[j]) <= kDeadSlope) continue;
    if (p.w()[j] * x + p.b()[j] > 0.0) s += p.v()[j] * p.w()[j];
  }
  return s;
}

bool slopes_equal(double a, double b) {
  return a == b || std::abs(a - b) <= kSlopeMergeTol * std::max(std::abs(a), std::abs(b));
}

}  // namespace

RawPieces extract_pieces(const Params& p, Interval domain) {
  if (!(domain.lo <= domain.hi)) throw std::invalid_argument("empty domain");
  std::vector<double> cand;
  for (std::size_t j = 0; j < p.width(); ++j) {
    if (std::abs(p.w()[j]) <= kDeadSlope) continue;
    const double beta = -p.b()[j] / p.w()[j];
    if (beta > domain.lo && beta < domain.hi) cand.push_back(beta);
  }
  std::sort(cand.begin(), cand.end());

  const double merge_tol = kBreakpointMergeTol * std::max(1.0, domain.length());
  std::vector<double> bps;
  for (double c : cand) {
    if (bps.empty() || c - bps.back() > merge_tol) bps.push_back(c);
  }

  RawPieces out;
  out.domain = domain;
  out.value_at_anchor = evaluate(p, domain.lo);
  out.slopes.reserve(bps.size() + 1);
  double left = domain.lo;
  for (std::size_t i = 0; i <= bps.size(); ++i) {
    const double right = i < bps.size() ? bps[i] : domain.hi;
    out.slopes.push_back(slope_at(p, 0.5 * (left + right)));
    left = right;
  }
  out.breakpoints = std::move(bps);
  return out;
}

PiecewiseLinear to_piecewise(const Params& p, Interval domain) {
  RawPieces raw = extract_pieces(p, domain);
  std::vector<double> bps;
  std::vector<double> slopes{raw.slopes.front()};
  for (std::size_t i = 0; i < raw.breakpoints.size(); ++i) {
    if (slopes_equal(slopes.back(), raw.slopes[i + 1])) continue;
    bps.push_back(raw.breakpoints[i]);
    slopes.push_back(raw.slopes[i + 1]);
  }
  return PiecewiseLinear(domain, std::move(bps), std::move(slopes), raw.value_at_anchor);
}

std::vector<double> sign_changes(const PiecewiseLinear& f, Interval domain) {
  const double lo = std::max(domain.lo, f.domain().lo);
  const double hi = std::min(domain.hi, f.domain().hi);
  if (!(lo < hi)) return {};

  const auto nodes = f.node_values();
  double scale = 0.0;
  for (double v : nodes) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return {};
  const double zero_tol = 1e-12 * scale;

  // Cut points: segment ends, breakpoints, and strict crossings inside pieces.
  std::vector<double> cuts{lo, hi};
  std::vector<double> xs{f.domain().lo};
  xs.insert(xs.end(), f.breakpoints().begin(), f.breakpoints().end());
  xs.push_back(f.domain().hi);
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double fa = nodes[i];
    const double fb = nodes[i + 1];
    if (xs[i] > lo && xs[i] < hi) cuts.push_back(xs[i]);
    if ((fa > zero_tol && fb < -zero_tol) || (fa < -zero_tol && fb > zero_tol)) {
      const double root = xs[i] + (xs[i + 1] - xs[i]) * fa / (fa - fb);
      if (root > lo && root < hi) cuts.push_back(root);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<double> out;
  int prev_label = 0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
    const int label = f(mid) > zero_tol ? 1 : -1;
    if (prev_label != 0 && label != prev_label) out.push_back(cuts[i]);
    prev_label = label;
  }
  return out;
}

}  // namespace relugf
