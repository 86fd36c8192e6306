#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include <json.hpp>

#include "relugf/distribution.hpp"
#include "relugf/params.hpp"
#include "relugf/piecewise.hpp"

namespace relugf {

/// Label rule used everywhere: +1 when z > 0 and -1 otherwise.
inline int label_of(double z) { return z > 0.0 ? 1 : -1; }

/// Teacher network together with the constants of the data assumption.
struct TeacherSpec {
  Params teacher;
  double support_radius = 1.0;  // R
  double density_bound = 0.5;   // C
  double shortest_interval = 2.0;  // rho
  int sign_change_count = 0;    // r
  std::vector<double> change_points;  // label flips of the teacher in [-R, R]

  Interval support() const { return {-support_radius, support_radius}; }
  int label(double x) const { return label_of(evaluate(teacher, x)); }
};

/// Derives r, rho and the change points of `teacher` on [-R, R].
TeacherSpec make_teacher_spec(Params teacher, double support_radius, double density_bound);

/// Width-r teacher whose labels on [-1, 1] follow sign(sin(pi (r+1) (x+1) / 2)).
TeacherSpec make_fr_teacher(int r);

/// The target labelling f_r itself, evaluated from its closed form.
int fr_label(int r, double x);

struct Dataset {
  std::vector<double> xs;  // strictly increasing
  std::vector<int> ys;     // +-1

  std::size_t size() const { return xs.size(); }
};

Dataset make_dataset(std::vector<double> xs, std::vector<int> ys);

Dataset sample_dataset(const TeacherSpec& spec, const Distribution& dist, std::size_t n,
                       std::uint64_t seed);

/// A maximal run of equal labels, together with the open real interval
/// spanned from the last point of the previous run to the first point of the
/// next one (so neighbouring intervals overlap). Indices are 0-based.
struct ConstantInterval {
  std::size_t first;  // first index of the run
  std::size_t last;   // last index of the run
  double lo;          // x of the preceding point, or -R
  double hi;          // x of the following point, or +R
};

struct IntervalStructure {
  std::vector<std::size_t> sign_change_indices;  // i with y_i != y_{i+1}
  double min_gap = std::numeric_limits<double>::infinity();  // gamma
  std::vector<ConstantInterval> constant_intervals;
};

IntervalStructure interval_structure(const Dataset& d, double support_radius = 1.0);

nlohmann::ordered_json to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::ordered_json& j);
void write_csv(std::ostream& os, const Dataset& d);
Dataset read_csv(std::istream& is);
nlohmann::ordered_json to_json(const TeacherSpec& s);

}  // namespace relugf
