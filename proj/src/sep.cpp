#include "relugf/sep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace relugf {

SeparabilityResult check_separability(const Params& p, const Dataset& d, double support_radius) {
  SeparabilityResult res;
  const IntervalStructure is = interval_structure(d, support_radius);
  const std::size_t k = p.width();
  std::vector<bool> used(k, false);

  auto fail = [&](int item, int interval, const std::string& msg) {
    res.separable = false;
    res.failed_item = item;
    res.failed_interval = interval;
    res.message = msg;
    return res;
  };

  std::vector<std::pair<double, std::size_t>> live;  // (breakpoint, neuron), sorted
  for (std::size_t j = 0; j < k; ++j) {
    if (std::abs(p.w()[j]) > kDeadSlope) live.emplace_back(-p.b()[j] / p.w()[j], j);
  }
  std::sort(live.begin(), live.end());

  double gap_min = std::numeric_limits<double>::infinity();
  double big_q = 0.0;
  for (std::size_t c = 0; c < is.constant_intervals.size(); ++c) {
    const ConstantInterval& iv = is.constant_intervals[c];
    std::vector<std::pair<double, std::size_t>> inside;
    for (const auto& e : live) {
      if (e.first > iv.lo && e.first < iv.hi) inside.push_back(e);
    }
    std::ostringstream where;
    where << "interval " << c << " (" << iv.lo << ", " << iv.hi << ")";
    if (inside.empty()) return fail(1, static_cast<int>(c), "no breakpoint in " + where.str());
    const auto left = inside.front();
    const auto right = inside.back();
    std::optional<std::pair<double, std::size_t>> mid;
    double best = -1.0;
    for (const auto& e : inside) {
      if (!(e.first > left.first && e.first < right.first)) continue;
      const double g = std::min(e.first - left.first, right.first - e.first);
      if (g > best) {
        best = g;
        mid = e;
      }
    }
    if (!mid) {
      return fail(3, static_cast<int>(c), "fewer than three distinct breakpoints in " + where.str());
    }
    IntervalWitness wit{{left.second, mid->second, right.second},
                        {left.first, mid->first, right.first}};
    for (std::size_t idx : wit.neurons) used[idx] = true;
    gap_min = std::min({gap_min, wit.beta[1] - wit.beta[0], wit.beta[2] - wit.beta[1]});
    big_q = std::max({big_q, wit.beta[1] - wit.beta[0], wit.beta[2] - wit.beta[1]});
    if (!res.witnesses.empty()) {
      big_q = std::max(big_q, std::abs(wit.beta[0] - res.witnesses.back().beta[2]));
    }
    res.witnesses.push_back(wit);
  }

  // Four all-active neurons, two on each side of the origin, closest first.
  std::vector<std::pair<double, std::size_t>> neg, pos;
  for (const auto& [beta, j] : live) {
    if (used[j]) continue;
    const bool active = std::all_of(d.xs.begin(), d.xs.end(),
                                    [&](double x) { return p.w()[j] * x + p.b()[j] > 0.0; });
    if (!active) continue;
    if (beta < 0.0) neg.emplace_back(-beta, j);
    if (beta > 0.0) pos.emplace_back(beta, j);
  }
  std::sort(neg.begin(), neg.end());
  std::sort(pos.begin(), pos.end());
  if (neg.size() < 2 || pos.size() < 2) {
    return fail(2, -1, "fewer than two all-active neurons on some side of the origin");
  }
  for (const auto& side : {neg, pos}) {
    for (std::size_t a = 0; a < 2; ++a) {
      res.all_active.push_back(side[a].second);
      big_q = std::max(big_q, side[a].first);
    }
  }

  SeparabilityConstants& c = res.constants;
  c.m = std::numeric_limits<double>::infinity();
  double max_b = 0.0;
  auto absorb = [&](std::size_t j) {
    c.m = std::min(c.m, std::abs(p.w()[j]));
    max_b = std::max(max_b, std::abs(p.b()[j]));
  };
  for (const auto& wit : res.witnesses) {
    for (std::size_t j : wit.neurons) absorb(j);
  }
  for (std::size_t j : res.all_active) absorb(j);
  c.M = std::max(max_b, c.m);
  c.q = gap_min;
  c.Q = std::max(big_q, gap_min);
  // Without label switches the gap condition is vacuous; cap it by the support.
  c.gamma = std::isfinite(is.min_gap) ? is.min_gap : 2.0 * support_radius;
  res.separable = true;
  return res;
}

double grad_lower_bound(const SeparabilityConstants& c, std::size_t n) {
  const double nn = static_cast<double>(n);
  return c.gamma * c.gamma * c.q * c.q * std::pow(c.m, 6) /
         (259200.0 * std::pow(nn, 4) * c.Q * c.Q * std::pow(c.M, 4));
}

std::vector<std::vector<double>> masking_matrix(int d, unsigned mask) {
  std::vector<std::vector<double>> a(d, std::vector<double>(d, 0.0));
  std::fill(a[0].begin(), a[0].end(), 1.0);
  for (int r = 1; r < d; ++r) {
    const bool leading_zeros = (mask >> (r - 1)) & 1u;
    for (int c = 0; c < d; ++c) a[r][c] = leading_zeros ? (c >= r ? 1.0 : 0.0) : (c < r ? 1.0 : 0.0);
  }
  return a;
}

MaskingReport masking_inverse_bound(int d) {
  if (d < 1 || d > 16) throw std::invalid_argument("masking_inverse_bound: need 1 <= d <= 16");
  MaskingReport rep;
  const unsigned count = 1u << (d - 1);
  for (unsigned mask = 0; mask < count; ++mask) {
    const auto rows = masking_matrix(d, mask);
    Eigen::MatrixXd a(d, d);
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) a(r, c) = rows[r][c];
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& s = svd.singularValues();
    const double smin = s[d - 1];
    ++rep.patterns;
    if (!(smin > 1e-12 * s[0])) {
      rep.all_invertible = false;
      rep.max_inverse_norm = std::numeric_limits<double>::infinity();
      continue;
    }
    rep.max_inverse_norm = std::max(rep.max_inverse_norm, 1.0 / smin);
  }
  return rep;
}

bool neighborhood_membership(const NeighborhoodSpec& spec, const Params& p) {
  if (!(spec.delta >= 0.0)) throw std::invalid_argument("neighborhood radius must be >= 0");
  if (spec.center.width() != p.width()) {
    throw std::invalid_argument("neighborhood_membership: width mismatch");
  }
  for (std::size_t j = 0; j < p.width(); ++j) {
    const double dw = p.w()[j] - spec.center.w()[j];
    const double db = p.b()[j] - spec.center.b()[j];
    if (dw * dw + db * db > spec.delta * spec.delta) return false;
  }
  return true;
}

TheoreticalConstants theoretical_constants(const TeacherSpec& spec, std::size_t n, double delta,
                                           double k) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (n == 0) throw std::invalid_argument("n must be positive");
  if (spec.sign_change_count < 1) throw std::invalid_argument("need r >= 1");
  const double R = spec.support_radius;
  const double C = spec.density_bound;
  const double rho = spec.shortest_interval;
  const double r = spec.sign_change_count;
  const double nn = static_cast<double>(n);
  TheoreticalConstants out{};
  out.k_min = 6144.0 * std::pow(R, 4) * std::log(24.0 * r / delta) / rho;
  out.k_used = k > 0.0 ? k : std::ceil(out.k_min);
  out.sigma_h_min = 4200.0 * nn * nn * C * std::pow(R, 3.5) * std::sqrt(r * out.k_used) / (delta * rho);
  out.sigma_o_max =
      1.0 / (4.0 * out.k_used * R * out.sigma_h_min * std::log(6.0 * out.k_used / delta));
  out.delta = delta * rho * out.sigma_h_min / (24.0 * nn * out.k_used * C * R * R * R);
  return out;
}

double pl_proposition_bound(const TeacherSpec& spec, std::size_t n, double delta, double sigma_h) {
  const double R = spec.support_radius;
  const double C = spec.density_bound;
  const double rho = spec.shortest_interval;
  const double r = spec.sign_change_count;
  return 3e-11 * delta * delta * rho * rho * sigma_h * sigma_h /
         (std::pow(static_cast<double>(n), 6) * r * r * C * C * std::pow(R, 8));
}

EventProbability event_probability_mc(double a, double eps, double support_radius,
                                      std::size_t samples, std::uint64_t seed) {
  if (!(eps > 0.0) || !(support_radius > 0.0) || samples == 0) {
    throw std::invalid_argument("event_probability_mc: bad arguments");
  }
  const double R = support_radius;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double w = nd(rng);
    const double b = nd(rng);
    if (!(w > 1.0 / R && w < 2.0 / R)) continue;
    const double beta = -b / w;
    hits += beta > a && beta < a + eps;
  }
  EventProbability out{};
  const double m = static_cast<double>(samples);
  out.p_hat = static_cast<double>(hits) / m;
  out.standard_error = std::sqrt(std::max(out.p_hat * (1.0 - out.p_hat), 1.0 / m) / m);
  auto density = [&](double x) {
    const double s = 1.0 + x * x;
    return std::exp(-s / (2 * R * R)) * -std::expm1(-3.0 * s / (2 * R * R)) / s;
  };
  out.exact = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(density, a, a + eps) /
              (2.0 * std::numbers::pi);
  out.bound = eps / (512.0 * std::pow(R, 4));
  out.pass = out.p_hat >= out.bound - 4.0 * out.standard_error;
  return out;
}

PLSample sample_pl_points(const Params& theta0, const Dataset& d, double delta, double sigma_o,
                          double bound, std::size_t count, std::uint64_t seed, LossKind kind) {
  const std::size_t k = theta0.width();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> uv(-3.0 * sigma_o, 3.0 * sigma_o);
  Objective obj(d, kind, SubgradientPolicy{});
  std::vector<double> theta(3 * k), grad(3 * k);
  PLSample out;
  out.bound = bound;
  out.min_half_grad_sq = std::numeric_limits<double>::infinity();
  const double half_inv_n = 0.5 / static_cast<double>(d.size());
  for (std::size_t s = 0; s < count; ++s) {
    for (std::size_t j = 0; j < k; ++j) {
      const double rad = delta * std::sqrt(u01(rng));
      const double ang = 2.0 * std::numbers::pi * u01(rng);
      theta[j] = theta0.w()[j] + rad * std::cos(ang);
      theta[k + j] = theta0.b()[j] + rad * std::sin(ang);
    }
    for (std::size_t j = 0; j < k; ++j) theta[2 * k + j] = uv(rng);
    ++out.drawn;
    const double loss = obj.gradient(theta.data(), k, grad.data());
    if (loss < half_inv_n) continue;
    ++out.qualified;
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double val = 0.5 * sq;
    out.min_half_grad_sq = std::min(out.min_half_grad_sq, val);
    out.violations += val < bound;
  }
  return out;
}

nlohmann::ordered_json to_json(const SeparabilityResult& s) {
  nlohmann::ordered_json j;
  j["separable"] = s.separable;
  if (s.separable) {
    j["constants"] = {{"gamma", s.constants.gamma}, {"m", s.constants.m}, {"M", s.constants.M},
                      {"q", s.constants.q},         {"Q", s.constants.Q}};
  } else {
    j["failed_item"] = s.failed_item;
    j["failed_interval"] = s.failed_interval;
    j["message"] = s.message;
  }
  auto wits = nlohmann::ordered_json::array();
  for (const auto& w : s.witnesses) {
    wits.push_back({{"neurons", {w.neurons[0], w.neurons[1], w.neurons[2]}},
                    {"beta", {w.beta[0], w.beta[1], w.beta[2]}}});
  }
  j["witnesses"] = wits;
  j["all_active"] = s.all_active;
  return j;
}

}  // namespace relugf
