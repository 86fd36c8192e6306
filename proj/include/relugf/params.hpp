#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

namespace relugf {

/// Hidden units with |w| at or below this are treated as constant functions.
inline constexpr double kDeadSlope = 1e-12;

/// Parameters of a univariate depth-2 ReLU network
///   N(x) = sum_j v_j * max(0, w_j * x + b_j).
///
/// The flat view orders coordinates as [w_1..w_k, b_1..b_k, v_1..v_k].
class Params {
 public:
  Params() = default;
  Params(std::vector<double> w, std::vector<double> b, std::vector<double> v);

  static Params zeros(std::size_t k);
  static Params from_flat(std::span<const double> flat);

  std::size_t width() const { return w_.size(); }

  const std::vector<double>& w() const { return w_; }
  const std::vector<double>& b() const { return b_; }
  const std::vector<double>& v() const { return v_; }

  std::vector<double> flat() const;
  double norm() const;
  double squared_norm() const;

  /// Breakpoint -b_j / w_j, or +-infinity for dead-slope units.
  double breakpoint(std::size_t j) const;

  bool operator==(const Params&) const = default;

 private:
  void validate() const;

  std::vector<double> w_;
  std::vector<double> b_;
  std::vector<double> v_;
};

double evaluate(const Params& p, double x);

/// Returns alpha * theta. The network output scales by alpha^2.
Params scale(const Params& p, double alpha);

void to_json(nlohmann::ordered_json& j, const Params& p);
void from_json(const nlohmann::ordered_json& j, Params& p);

}  // namespace relugf
