#include "relugf/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace relugf {

Distribution Distribution::uniform(double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("uniform: radius must be positive");
  return uniform(Interval{-radius, radius});
}

Distribution Distribution::uniform(Interval support) {
  if (!(support.lo < support.hi)) throw std::invalid_argument("uniform: empty support");
  Distribution d;
  d.kind_ = DistributionKind::kUniform;
  d.support_ = support;
  return d;
}

Distribution Distribution::truncated_gaussian(double radius, double sigma) {
  if (!(radius > 0.0) || !(sigma > 0.0)) {
    throw std::invalid_argument("truncated_gaussian: radius and sigma must be positive");
  }
  Distribution d;
  d.kind_ = DistributionKind::kTruncatedGaussian;
  d.support_ = Interval{-radius, radius};
  d.sigma_ = sigma;
  d.gauss_mass_ = std::erf(radius / (sigma * std::numbers::sqrt2));
  return d;
}

Distribution Distribution::piecewise(std::vector<DensityPiece> pieces) {
  if (pieces.empty()) throw std::invalid_argument("piecewise: no pieces");
  std::sort(pieces.begin(), pieces.end(),
            [](const DensityPiece& a, const DensityPiece& b) { return a.lo < b.lo; });
  double total = 0.0;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& p = pieces[i];
    if (!(p.lo < p.hi) || !(p.weight >= 0.0)) {
      throw std::invalid_argument("piecewise: each piece needs lo < hi and weight >= 0");
    }
    if (i > 0 && p.lo < pieces[i - 1].hi) throw std::invalid_argument("piecewise: overlap");
    total += p.weight;
  }
  if (!(total > 0.0)) throw std::invalid_argument("piecewise: zero total weight");
  for (auto& p : pieces) p.weight /= total;
  Distribution d;
  d.kind_ = DistributionKind::kPiecewiseDensity;
  d.support_ = Interval{pieces.front().lo, pieces.back().hi};
  d.pieces_ = std::move(pieces);
  return d;
}

double Distribution::pdf(double x) const {
  if (x < support_.lo || x > support_.hi) return 0.0;
  switch (kind_) {
    case DistributionKind::kUniform:
      return 1.0 / support_.length();
    case DistributionKind::kTruncatedGaussian: {
      const double z = x / sigma_;
      return std::exp(-0.5 * z * z) / (sigma_ * std::sqrt(2.0 * std::numbers::pi) * gauss_mass_);
    }
    case DistributionKind::kPiecewiseDensity:
      for (const auto& p : pieces_) {
        if (x >= p.lo && x <= p.hi) return p.weight / (p.hi - p.lo);
      }
      return 0.0;
  }
  return 0.0;
}

double Distribution::cdf(double x) const {
  if (x <= support_.lo) return 0.0;
  if (x >= support_.hi) return 1.0;
  switch (kind_) {
    case DistributionKind::kUniform:
      return (x - support_.lo) / support_.length();
    case DistributionKind::kTruncatedGaussian: {
      const double s = sigma_ * std::numbers::sqrt2;
      return 0.5 * (std::erf(x / s) + gauss_mass_) / gauss_mass_;
    }
    case DistributionKind::kPiecewiseDensity: {
      double acc = 0.0;
      for (const auto& p : pieces_) {
        if (x >= p.hi) {
          acc += p.weight;
        } else if (x > p.lo) {
          acc += p.weight * (x - p.lo) / (p.hi - p.lo);
        }
      }
      return acc;
    }
  }
  return 0.0;
}

double Distribution::max_density() const {
  switch (kind_) {
    case DistributionKind::kUniform:
      return 1.0 / support_.length();
    case DistributionKind::kTruncatedGaussian:
      return pdf(0.0);
    case DistributionKind::kPiecewiseDensity: {
      double m = 0.0;
      for (const auto& p : pieces_) m = std::max(m, p.weight / (p.hi - p.lo));
      return m;
    }
  }
  return 0.0;
}

double Distribution::sample(std::mt19937_64& rng) const {
  switch (kind_) {
    case DistributionKind::kUniform:
      return std::uniform_real_distribution<double>(support_.lo, support_.hi)(rng);
    case DistributionKind::kTruncatedGaussian: {
      if (gauss_mass_ >= 0.3) {
        std::normal_distribution<double> normal(0.0, sigma_);
        for (;;) {
          const double x = normal(rng);
          if (x >= support_.lo && x <= support_.hi) return x;
        }
      }
      // Wide Gaussian relative to the support: rejection from the uniform.
      std::uniform_real_distribution<double> unif(support_.lo, support_.hi);
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      const double peak = max_density();
      for (;;) {
        const double x = unif(rng);
        if (u01(rng) * peak <= pdf(x)) return x;
      }
    }
    case DistributionKind::kPiecewiseDensity: {
      double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      for (const auto& p : pieces_) {
        if (u < p.weight || &p == &pieces_.back()) {
          return std::uniform_real_distribution<double>(p.lo, p.hi)(rng);
        }
        u -= p.weight;
      }
      break;
    }
  }
  throw std::logic_error("unreachable");
}

std::vector<double> Distribution::density_breaks() const {
  std::vector<double> out;
  if (kind_ != DistributionKind::kPiecewiseDensity) return out;
  for (const auto& p : pieces_) {
    for (double x : {p.lo, p.hi}) {
      if (x > support_.lo && x < support_.hi) out.push_back(x);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

nlohmann::ordered_json Distribution::to_json() const {
  nlohmann::ordered_json j;
  switch (kind_) {
    case DistributionKind::kUniform:
      j = {{"kind", "uniform"}, {"lo", support_.lo}, {"hi", support_.hi}};
      break;
    case DistributionKind::kTruncatedGaussian:
      j = {{"kind", "truncated-gaussian"}, {"radius", support_.hi}, {"sigma", sigma_}};
      break;
    case DistributionKind::kPiecewiseDensity: {
      j = {{"kind", "piecewise-density"}, {"pieces", nlohmann::ordered_json::array()}};
      for (const auto& p : pieces_) j["pieces"].push_back({p.lo, p.hi, p.weight});
      break;
    }
  }
  return j;
}

Distribution Distribution::from_json(const nlohmann::ordered_json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "uniform") {
    if (j.contains("radius")) return uniform(j.at("radius").get<double>());
    return uniform(Interval{j.at("lo").get<double>(), j.at("hi").get<double>()});
  }
  if (kind == "truncated-gaussian") {
    return truncated_gaussian(j.at("radius").get<double>(), j.at("sigma").get<double>());
  }
  if (kind == "piecewise-density") {
    std::vector<DensityPiece> pieces;
    for (const auto& p : j.at("pieces")) {
      pieces.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
    }
    return piecewise(std::move(pieces));
  }
  throw std::invalid_argument("unknown distribution kind: " + kind);
}

}  // namespace relugf
