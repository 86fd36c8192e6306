#pragma once

#include <random>
#include <vector>

#include <json.hpp>

#include "relugf/piecewise.hpp"

namespace relugf {

enum class DistributionKind { kUniform, kTruncatedGaussian, kPiecewiseDensity };

/// One block of a piecewise-constant density: `weight` is the (unnormalized)
/// probability mass placed uniformly on [lo, hi].
struct DensityPiece {
  double lo;
  double hi;
  double weight;
};

/// Input distribution with a bounded density on a compact support.
class Distribution {
 public:
  static Distribution uniform(double radius);
  static Distribution uniform(Interval support);
  /// N(0, sigma^2) conditioned on [-radius, radius].
  static Distribution truncated_gaussian(double radius, double sigma);
  /// Disjoint blocks; weights are normalized internally.
  static Distribution piecewise(std::vector<DensityPiece> pieces);

  DistributionKind kind() const { return kind_; }
  Interval support() const { return support_; }
  double pdf(double x) const;
  double cdf(double x) const;
  double probability(Interval iv) const { return cdf(iv.hi) - cdf(iv.lo); }
  double max_density() const;
  double sample(std::mt19937_64& rng) const;
  /// Points inside the support where the density is not smooth.
  std::vector<double> density_breaks() const;

  nlohmann::ordered_json to_json() const;
  static Distribution from_json(const nlohmann::ordered_json& j);

 private:
  Distribution() = default;

  DistributionKind kind_ = DistributionKind::kUniform;
  Interval support_{};
  double sigma_ = 1.0;
  double gauss_mass_ = 1.0;
  std::vector<DensityPiece> pieces_;  // normalized: weights sum to 1
};

}  // namespace relugf
