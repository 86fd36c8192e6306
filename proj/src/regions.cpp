#include "relugf/regions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "relugf/loss.hpp"

namespace relugf {

std::string to_string(BoundaryKind kind) {
  switch (kind) {
    case BoundaryKind::kIncreases: return "derivative-increases";
    case BoundaryKind::kDecreases: return "derivative-decreases";
    case BoundaryKind::kSpurious: return "spurious";
  }
  return "?";
}

RegionReport count_regions(const Params& p, Interval domain, double jump_tolerance) {
  const RawPieces raw = extract_pieces(p, domain);
  RegionReport rep;
  rep.domain = domain;
  rep.jump_tolerance = jump_tolerance;
  rep.boundaries = raw.breakpoints;
  double max_slope = 0.0;
  for (double s : raw.slopes) max_slope = std::max(max_slope, std::abs(s));
  for (std::size_t i = 0; i < raw.breakpoints.size(); ++i) {
    const double jump = raw.slopes[i + 1] - raw.slopes[i];
    rep.jumps.push_back(jump);
    BoundaryKind kind = BoundaryKind::kSpurious;
    if (std::abs(jump) > jump_tolerance * max_slope) {
      kind = jump > 0.0 ? BoundaryKind::kIncreases : BoundaryKind::kDecreases;
      ++rep.region_count;
    }
    rep.kinds.push_back(kind);
  }
  return rep;
}

ActivationReport activation_points_per_interval(const Params& p, const Dataset& d, double tau,
                                                double jump_tolerance) {
  ActivationReport rep;
  const auto q = margins(p, d);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (q[i] <= 1.0 + tau) rep.margin_one.push_back(i);
  }

  // Activation points with their net slope jump sum v_j |w_j|.
  double max_vw = 0.0;
  for (std::size_t j = 0; j < p.width(); ++j) {
    if (std::abs(p.w()[j]) > kDeadSlope) max_vw = std::max(max_vw, std::abs(p.v()[j] * p.w()[j]));
  }
  std::vector<std::pair<double, double>> raw;
  for (std::size_t j = 0; j < p.width(); ++j) {
    const double w = p.w()[j];
    if (std::abs(w) <= kDeadSlope) continue;
    if (!(std::abs(p.v()[j] * w) > jump_tolerance * max_vw)) continue;
    raw.emplace_back(-p.b()[j] / w, p.v()[j] * std::abs(w));
  }
  std::sort(raw.begin(), raw.end());
  std::vector<double> jumps;
  for (const auto& [x, jump] : raw) {
    const double tol = kBreakpointMergeTol * std::max(1.0, std::abs(x));
    if (!rep.points.empty() && x - rep.points.back() <= tol) {
      jumps.back() += jump;
    } else {
      rep.points.push_back(x);
      jumps.push_back(jump);
    }
  }

  auto tally = [&](double lo, double hi, bool open_lo, bool open_hi) {
    ActivationInterval iv{lo, hi, 0, 0, 0};
    for (std::size_t a = 0; a < rep.points.size(); ++a) {
      const double x = rep.points[a];
      const bool in_lo = open_lo ? x > lo : x >= lo;
      const bool in_hi = open_hi ? x < hi : x <= hi;
      if (!in_lo || !in_hi) continue;
      ++iv.count;
      if (jumps[a] < 0.0) ++iv.decreasing;
      if (jumps[a] > 0.0) ++iv.increasing;
    }
    return iv;
  };

  const double inf = std::numeric_limits<double>::infinity();
  const auto& idx = rep.margin_one;
  if (idx.empty()) {
    rep.intervals.push_back(tally(-inf, inf, true, true));
    rep.max_outer = rep.intervals.back().count;
    return rep;
  }
  rep.intervals.push_back(tally(-inf, d.xs[idx.front()], true, true));
  for (std::size_t l = 0; l + 1 < idx.size(); ++l) {
    rep.intervals.push_back(tally(d.xs[idx[l]], d.xs[idx[l + 1]], true, true));
    rep.max_inner = std::max(rep.max_inner, rep.intervals.back().count);
  }
  rep.intervals.push_back(tally(d.xs[idx.back()], inf, true, true));
  rep.max_outer = std::max(rep.intervals.front().count, rep.intervals.back().count);

  // Same-label runs of margin-one points, split at the origin.
  std::size_t start = 0;
  for (std::size_t l = 1; l <= idx.size(); ++l) {
    if (l < idx.size() && d.ys[idx[l]] == d.ys[idx[start]]) continue;
    const int label = d.ys[idx[start]];
    const double xa = d.xs[idx[start]];
    const double xb = d.xs[idx[l - 1]];
    for (const auto& [lo, hi] : {std::pair{xa, std::min(xb, 0.0)}, std::pair{std::max(xa, 0.0), xb}}) {
      if (lo > hi) continue;
      const ActivationInterval iv = tally(lo, hi, false, false);
      rep.corner_counts.push_back(label > 0 ? iv.decreasing : iv.increasing);
      rep.max_corners = std::max(rep.max_corners, rep.corner_counts.back());
    }
    start = l;
  }
  return rep;
}

RegionBoundCheck region_bound_check(const RegionReport& report, int r) {
  const long bound = 32L * r + 67;
  const long slack = bound - static_cast<long>(report.region_count);
  return {slack >= 0, bound, slack};
}

nlohmann::ordered_json to_json(const RegionReport& r) {
  std::vector<std::string> kinds;
  for (auto k : r.kinds) kinds.push_back(to_string(k));
  return nlohmann::ordered_json{{"domain", {r.domain.lo, r.domain.hi}},
                                {"region_count", r.region_count},
                                {"boundaries", r.boundaries},
                                {"jumps", r.jumps},
                                {"kinds", kinds},
                                {"jump_tolerance", r.jump_tolerance}};
}

nlohmann::ordered_json to_json(const ActivationReport& a) {
  auto ivs = nlohmann::ordered_json::array();
  for (const auto& iv : a.intervals) {
    ivs.push_back({{"lo", iv.lo}, {"hi", iv.hi}, {"count", iv.count},
                   {"decreasing", iv.decreasing}, {"increasing", iv.increasing}});
  }
  return nlohmann::ordered_json{{"margin_one", a.margin_one},   {"points", a.points},
                                {"intervals", ivs},             {"corner_counts", a.corner_counts},
                                {"max_inner", a.max_inner},     {"max_outer", a.max_outer},
                                {"max_corners", a.max_corners}};
}

}  // namespace relugf
