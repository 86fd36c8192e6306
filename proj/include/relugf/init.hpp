#pragma once

#include <cstdint>
#include <vector>

#include "relugf/data.hpp"
#include "relugf/params.hpp"

namespace relugf {

enum class InitLaw { kGaussian, kUniform };

struct InitConfig {
  double sigma_h = 1.0;  // std of hidden weights and biases
  double sigma_o = 1.0;  // std of output weights
  std::size_t k = 1;
  std::uint64_t seed = 0;
  /// kUniform draws from the centered uniform law with the same variance.
  /// It is a robustness option without certified bounds.
  InitLaw law = InitLaw::kGaussian;
};

/// w and b are drawn first (all of w, then all of b), then v.
Params sample_init(const InitConfig& cfg);

/// sigma_o = 1 / (4 k R sigma_h log(12 k / delta)).
double practical_sigma_o(std::size_t k, double support_radius, double sigma_h, double delta);

/// Kolmogorov-Smirnov distance between the empirical law of -b/w over m
/// hidden units drawn from `cfg` and the standard Cauchy CDF.
double breakpoint_law_check(const InitConfig& cfg, std::size_t m);

/// Sup distance between the empirical CDF of `samples` and the standard
/// Cauchy CDF. Sorts a copy.
double ks_statistic_cauchy(std::vector<double> samples);

enum class Orientation { kOpensRight, kOpensLeft, kConstant };

struct NeuronGeometry {
  double breakpoint;
  Orientation orientation;
  bool active_on_all;  // w x_i + b > 0 for every data point
  bool dormant;        // breakpoint outside the support and off on all of it
};

std::vector<NeuronGeometry> classify_neurons(const Params& p, const Dataset& d, Interval support);

std::size_t dormant_count(const Params& p, Interval support);

/// Exact P[X >= ceil(k/4)] for X ~ Binomial(k, 1/4), returned together with a
/// flag telling whether it is >= 1/4, decided in exact integer arithmetic.
struct DormantTail {
  double probability;
  bool at_least_quarter;
};
DormantTail dormant_tail_exact(unsigned k);

}  // namespace relugf
