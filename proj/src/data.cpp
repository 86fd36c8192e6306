#include "relugf/data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace relugf {

TeacherSpec make_teacher_spec(Params teacher, double support_radius, double density_bound) {
  if (!(support_radius > 0.0)) throw std::invalid_argument("support radius must be positive");
  if (!(density_bound >= 1.0 / (2.0 * support_radius) * (1.0 - 1e-12))) {
    throw std::invalid_argument("density bound must be at least 1/(2R)");
  }
  TeacherSpec spec;
  spec.support_radius = support_radius;
  spec.density_bound = density_bound;
  const Interval dom = spec.support();
  spec.change_points = sign_changes(to_piecewise(teacher, dom), dom);
  spec.sign_change_count = static_cast<int>(spec.change_points.size());
  double prev = dom.lo;
  double rho = std::numeric_limits<double>::infinity();
  for (double c : spec.change_points) {
    rho = std::min(rho, c - prev);
    prev = c;
  }
  spec.shortest_interval = std::min(rho, dom.hi - prev);
  spec.teacher = std::move(teacher);
  return spec;
}

TeacherSpec make_fr_teacher(int r) {
  if (r < 1) throw std::invalid_argument("make_fr_teacher: r must be >= 1");
  const double spacing = 2.0 / (r + 1);
  auto zero = [&](int m) { return -1.0 + m * spacing; };

  // Positive ramp down to zero at the first change point, flat zero across the
  // first negative run, then a triangle wave with zeros at the remaining change
  // points: kinks at the second change point and at the midpoints of the runs
  // in between. Exactly r units.
  std::vector<double> w{-1.0}, b{zero(1)}, v{1.0};
  if (r >= 2) {
    w.push_back(1.0);
    b.push_back(-zero(2));
    v.push_back(1.0);
  }
  for (int m = 2; m <= r - 1; ++m) {
    const double mid = 0.5 * (zero(m) + zero(m + 1));
    w.push_back(1.0);
    b.push_back(-mid);
    v.push_back(m % 2 == 0 ? -2.0 : 2.0);
  }

  Params raw(w, b, v);
  const auto nodes = to_piecewise(raw, Interval{-1.0, 1.0}).node_values();
  double peak = 0.0;
  for (double y : nodes) peak = std::max(peak, std::abs(y));
  for (double& vj : v) vj /= peak;

  TeacherSpec spec = make_teacher_spec(Params(w, b, v), 1.0, 0.5);
  if (spec.sign_change_count != r) {
    throw std::logic_error("make_fr_teacher: construction produced wrong sign pattern");
  }
  return spec;
}

int fr_label(int r, double x) {
  return label_of(std::sin(0.5 * std::numbers::pi * (r + 1) * (x + 1.0)));
}

Dataset make_dataset(std::vector<double> xs, std::vector<int> ys) {
  if (xs.empty()) throw std::invalid_argument("dataset must be nonempty");
  if (xs.size() != ys.size()) throw std::invalid_argument("xs and ys differ in length");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i])) throw std::invalid_argument("non-finite x");
    if (ys[i] != 1 && ys[i] != -1) throw std::invalid_argument("labels must be +-1");
    if (i > 0 && !(xs[i - 1] < xs[i])) {
      throw std::invalid_argument("xs must be strictly increasing");
    }
  }
  return Dataset{std::move(xs), std::move(ys)};
}

Dataset sample_dataset(const TeacherSpec& spec, const Distribution& dist, std::size_t n,
                       std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample_dataset: n must be positive");
  if (dist.max_density() > spec.density_bound * (1.0 + 1e-12)) {
    throw std::invalid_argument("sample_dataset: density exceeds the bound C");
  }
  const Interval sup = dist.support();
  const double R = spec.support_radius;
  if (sup.lo < -R * (1.0 + 1e-15) || sup.hi > R * (1.0 + 1e-15)) {
    throw std::invalid_argument("sample_dataset: distribution support exceeds [-R, R]");
  }

  std::mt19937_64 rng(seed);
  const double near = 1e-12 * std::max(1.0, R);
  auto draw = [&]() {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double x = dist.sample(rng);
      const bool on_change = std::any_of(spec.change_points.begin(), spec.change_points.end(),
                                         [&](double c) { return std::abs(x - c) <= near; });
      if (!on_change) return x;
    }
    throw std::runtime_error("sample_dataset: repeated draws on a sign-change point");
  };

  std::vector<double> xs;
  xs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) xs.push_back(draw());
  for (int attempt = 0;; ++attempt) {
    std::sort(xs.begin(), xs.end());
    auto dup = std::adjacent_find(xs.begin(), xs.end());
    if (dup == xs.end()) break;
    if (attempt >= 100) throw std::runtime_error("sample_dataset: cannot draw distinct points");
    *dup = draw();
  }

  std::vector<int> ys;
  ys.reserve(n);
  for (double x : xs) ys.push_back(spec.label(x));
  return make_dataset(std::move(xs), std::move(ys));
}

IntervalStructure interval_structure(const Dataset& d, double support_radius) {
  IntervalStructure out;
  const std::size_t n = d.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (d.ys[i] != d.ys[i + 1]) {
      out.sign_change_indices.push_back(i);
      out.min_gap = std::min(out.min_gap, d.xs[i + 1] - d.xs[i]);
    }
  }
  std::size_t first = 0;
  for (std::size_t c = 0; c <= out.sign_change_indices.size(); ++c) {
    const std::size_t last = c < out.sign_change_indices.size() ? out.sign_change_indices[c] : n - 1;
    ConstantInterval iv;
    iv.first = first;
    iv.last = last;
    iv.lo = first == 0 ? -support_radius : d.xs[first - 1];
    iv.hi = last + 1 == n ? support_radius : d.xs[last + 1];
    out.constant_intervals.push_back(iv);
    first = last + 1;
  }
  return out;
}

nlohmann::ordered_json to_json(const Dataset& d) {
  return nlohmann::ordered_json{{"n", d.size()}, {"x", d.xs}, {"y", d.ys}};
}

Dataset dataset_from_json(const nlohmann::ordered_json& j) {
  return make_dataset(j.at("x").get<std::vector<double>>(), j.at("y").get<std::vector<int>>());
}

void write_csv(std::ostream& os, const Dataset& d) {
  os << "x,y\n";
  os.precision(17);
  for (std::size_t i = 0; i < d.size(); ++i) os << d.xs[i] << ',' << d.ys[i] << '\n';
}

Dataset read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("x,y", 0) != 0) {
    throw std::invalid_argument("dataset CSV must start with header x,y");
  }
  std::vector<double> xs;
  std::vector<int> ys;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("malformed CSV row: " + line);
    xs.push_back(std::stod(line.substr(0, comma)));
    ys.push_back(std::stoi(line.substr(comma + 1)));
  }
  return make_dataset(std::move(xs), std::move(ys));
}

nlohmann::ordered_json to_json(const TeacherSpec& s) {
  nlohmann::ordered_json teacher;
  to_json(teacher, s.teacher);
  return nlohmann::ordered_json{{"teacher", teacher},
                                {"R", s.support_radius},
                                {"C", s.density_bound},
                                {"rho", s.shortest_interval},
                                {"r", s.sign_change_count},
                                {"change_points", s.change_points}};
}

}  // namespace relugf
