#include "relugf/init.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace relugf {

Params sample_init(const InitConfig& cfg) {
  if (!(cfg.sigma_h > 0.0) || !(cfg.sigma_o > 0.0)) {
    throw std::invalid_argument("sample_init: standard deviations must be positive");
  }
  if (cfg.k == 0) throw std::invalid_argument("sample_init: k must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  auto draw = [&](double sigma, std::size_t count) {
    std::vector<double> out(count);
    if (cfg.law == InitLaw::kGaussian) {
      std::normal_distribution<double> nd(0.0, 1.0);
      for (double& x : out) x = sigma * nd(rng);
    } else {
      const double half = std::sqrt(3.0);
      std::uniform_real_distribution<double> ud(-half, half);
      for (double& x : out) x = sigma * ud(rng);
    }
    return out;
  };
  auto w = draw(cfg.sigma_h, cfg.k);
  auto b = draw(cfg.sigma_h, cfg.k);
  auto v = draw(cfg.sigma_o, cfg.k);
  return Params(std::move(w), std::move(b), std::move(v));
}

double practical_sigma_o(std::size_t k, double support_radius, double sigma_h, double delta) {
  return 1.0 / (4.0 * static_cast<double>(k) * support_radius * sigma_h *
                std::log(12.0 * static_cast<double>(k) / delta));
}

double ks_statistic_cauchy(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("ks_statistic_cauchy: no samples");
  std::sort(samples.begin(), samples.end());
  const double m = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = 0.5 + std::atan(samples[i]) / std::numbers::pi;
    d = std::max({d, (static_cast<double>(i) + 1.0) / m - f, f - static_cast<double>(i) / m});
  }
  return d;
}

double breakpoint_law_check(const InitConfig& cfg, std::size_t m) {
  if (m < 1000) throw std::invalid_argument("breakpoint_law_check: need m >= 1000");
  InitConfig c = cfg;
  c.k = m;
  const Params p = sample_init(c);
  std::vector<double> bps(m);
  for (std::size_t j = 0; j < m; ++j) bps[j] = -p.b()[j] / p.w()[j];
  return ks_statistic_cauchy(std::move(bps));
}

std::vector<NeuronGeometry> classify_neurons(const Params& p, const Dataset& d, Interval support) {
  std::vector<NeuronGeometry> out;
  out.reserve(p.width());
  for (std::size_t j = 0; j < p.width(); ++j) {
    const double w = p.w()[j];
    const double b = p.b()[j];
    NeuronGeometry g;
    g.breakpoint = p.breakpoint(j);
    if (std::abs(w) <= kDeadSlope) {
      g.orientation = Orientation::kConstant;
      g.dormant = b <= 0.0;
    } else {
      g.orientation = w > 0.0 ? Orientation::kOpensRight : Orientation::kOpensLeft;
      // The preactivation is affine, so it is <= 0 on the support iff it is at both ends.
      const bool off_everywhere = w * support.lo + b <= 0.0 && w * support.hi + b <= 0.0;
      g.dormant = !support.contains(g.breakpoint) && off_everywhere;
    }
    g.active_on_all = std::all_of(d.xs.begin(), d.xs.end(),
                                  [&](double x) { return w * x + b > 0.0; });
    out.push_back(g);
  }
  return out;
}

std::size_t dormant_count(const Params& p, Interval support) {
  std::size_t count = 0;
  for (std::size_t j = 0; j < p.width(); ++j) {
    const double w = p.w()[j];
    const double b = p.b()[j];
    if (std::abs(w) <= kDeadSlope) {
      count += b <= 0.0;
      continue;
    }
    const bool off = w * support.lo + b <= 0.0 && w * support.hi + b <= 0.0;
    count += off && !support.contains(-b / w);
  }
  return count;
}

DormantTail dormant_tail_exact(unsigned k) {
  if (k == 0 || k > 64) throw std::invalid_argument("dormant_tail_exact: need 1 <= k <= 64");
  using u128 = unsigned __int128;
  const unsigned threshold = (k + 3) / 4;  // ceil(k / 4) >= 1
  // P[X = i] = C(k, i) 3^(k-i) / 4^k. The tail excludes i = 0, so its
  // numerator stays below 4^64 = 2^128.
  u128 tail = 0;
  u128 binom = 1;  // C(k, i)
  for (unsigned i = 0; i <= k; ++i) {
    if (i > 0) binom = binom * (k - i + 1) / i;
    if (i < threshold) continue;
    u128 pow3 = 1;
    for (unsigned e = 0; e < k - i; ++e) pow3 *= 3;
    tail += binom * pow3;
  }
  const u128 quarter = static_cast<u128>(1) << (2 * k - 2);  // 4^k / 4
  return DormantTail{std::ldexp(static_cast<double>(tail), -2 * static_cast<int>(k)),
                     tail >= quarter};
}

}  // namespace relugf
