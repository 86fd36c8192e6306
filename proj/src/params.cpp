#include "relugf/params.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace relugf {

Params::Params(std::vector<double> w, std::vector<double> b, std::vector<double> v)
    : w_(std::move(w)), b_(std::move(b)), v_(std::move(v)) {
  validate();
}

Params Params::zeros(std::size_t k) {
  return Params(std::vector<double>(k, 0.0), std::vector<double>(k, 0.0),
                std::vector<double>(k, 0.0));
}

Params Params::from_flat(std::span<const double> flat) {
  if (flat.size() % 3 != 0 || flat.empty()) {
    throw std::invalid_argument("flat parameter vector must have length 3k, k >= 1");
  }
  const std::size_t k = flat.size() / 3;
  return Params(std::vector<double>(flat.begin(), flat.begin() + k),
                std::vector<double>(flat.begin() + k, flat.begin() + 2 * k),
                std::vector<double>(flat.begin() + 2 * k, flat.end()));
}

void Params::validate() const {
  if (w_.empty()) throw std::invalid_argument("network width must be >= 1");
  if (b_.size() != w_.size() || v_.size() != w_.size()) {
    throw std::invalid_argument("w, b, v must have identical length");
  }
  for (const auto* vec : {&w_, &b_, &v_}) {
    for (double x : *vec) {
      if (!std::isfinite(x)) throw std::invalid_argument("non-finite parameter");
    }
  }
}

std::vector<double> Params::flat() const {
  std::vector<double> out;
  out.reserve(3 * width());
  out.insert(out.end(), w_.begin(), w_.end());
  out.insert(out.end(), b_.begin(), b_.end());
  out.insert(out.end(), v_.begin(), v_.end());
  return out;
}

double Params::squared_norm() const {
  double s = 0.0;
  for (std::size_t j = 0; j < width(); ++j) {
    s += w_[j] * w_[j] + b_[j] * b_[j] + v_[j] * v_[j];
  }
  return s;
}

double Params::norm() const { return std::sqrt(squared_norm()); }

double Params::breakpoint(std::size_t j) const {
  if (std::abs(w_[j]) <= kDeadSlope) {
    // A constant unit never forms a boundary; put it past whichever end it is
    // "open" towards so that orientation tests stay meaningful.
    return b_[j] > 0 ? -std::numeric_limits<double>::infinity()
                     : std::numeric_limits<double>::infinity();
  }
  return -b_[j] / w_[j];
}

double evaluate(const Params& p, double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("evaluate: x must be finite");
  double out = 0.0;
  for (std::size_t j = 0; j < p.width(); ++j) {
    out += p.v()[j] * std::max(0.0, p.w()[j] * x + p.b()[j]);
  }
  return out;
}

Params scale(const Params& p, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("scale: alpha must be positive and finite");
  }
  auto mul = [alpha](std::vector<double> v) {
    for (double& x : v) x *= alpha;
    return v;
  };
  return Params(mul(p.w()), mul(p.b()), mul(p.v()));
}

void to_json(nlohmann::ordered_json& j, const Params& p) {
  j = nlohmann::ordered_json{{"w", p.w()}, {"b", p.b()}, {"v", p.v()}, {"k", p.width()}};
}

void from_json(const nlohmann::ordered_json& j, Params& p) {
  p = Params(j.at("w").get<std::vector<double>>(), j.at("b").get<std::vector<double>>(),
             j.at("v").get<std::vector<double>>());
  if (j.contains("k") && j.at("k").get<std::size_t>() != p.width()) {
    throw std::invalid_argument("Params JSON: k does not match array lengths");
  }
}

}  // namespace relugf
