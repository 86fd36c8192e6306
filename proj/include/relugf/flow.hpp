#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "relugf/data.hpp"
#include "relugf/loss.hpp"
#include "relugf/params.hpp"

namespace relugf {

// Gradient flow d theta/dt = -grad L is integrated in the rescaled time
// tau with d tau = L dt, i.e. d theta/d tau = -grad L / L. The trajectory is
// the same curve, but the right-hand side stays O(|theta|) while L decays to
// zero, and log L can be carried without underflow. The physical time is
// integrated alongside as u = log(1 + t), du/d tau = exp(-u - log L).
//
// When the vector fields on both sides of a kink w_j x_i + b_j = 0 point into
// it, the flow slides along the kink (Filippov). The pair is then held on the
// kink with the ReLU derivative s_ij in [0, 1] that keeps it there; this is an
// element of the Clarke subdifferential. The pair is released once the value
// needed stays outside [0, 1] for a few accepted steps.

// kRosenbrock is a linearly implicit 2(3) pair for the late phase, where
// the softmax over margins makes the system stiff (its fast rates grow like
// |theta|^2). kAuto runs RK45 until L < 1/n and Rosenbrock afterwards.
enum class Integrator { kRK45, kRK4, kRosenbrock, kAuto };
std::string to_string(Integrator i);
Integrator integrator_from_string(const std::string& s);

struct Snapshot;

struct FlowConfig {
  Integrator integrator = Integrator::kAuto;
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  double rk4_step = 1e-3;  // tau step of the fixed-step integrator
  // Tolerances of the Rosenbrock pair. The softmax weights over margins need
  // the margins to O(1) in absolute terms, so the relative tolerance used is
  // min(stiff_rel_tol, stiff_margin_tol / min margin).
  double stiff_rel_tol = 1e-6;
  double stiff_abs_tol = 1e-12;
  double stiff_margin_tol = 0.05;

  double max_time = std::numeric_limits<double>::infinity();  // in t
  double max_tau = 1e5;
  std::size_t max_steps = 2'000'000;
  double loss_floor = 0.0;          // 0 disables
  double max_halvings = 1e6;        // stop once L <= L(0) 2^{-max_halvings}
  bool stop_at_half_inv_n = false;  // stop at the first time L <= 1/(2n)

  // Plateau: max angle between directions over a window in which |theta|
  // grew by plateau_growth, with at least direction_window snapshots.
  bool stop_at_plateau = true;
  std::size_t direction_window = 10;
  double plateau_angle = 1e-4;
  double plateau_growth = 10.0;
  bool plateau_needs_separation = true;  // only once L < 1/n

  // Snapshot triggers.
  double snap_dtau = 1.0;
  double snap_dlog_loss = 0.05;  // absolute, or this fraction of |log L| if larger
  double snap_dlog_norm = 0.01;
  bool keep_params = true;

  // Activation-pattern events.
  bool locate_kinks = true;
  double event_tol = 1e-12;
  std::size_t zeno_limit = 64;  // crossings of one pair before locating stops
  std::size_t max_stored_events = 20000;

  SubgradientPolicy policy{};

  // Checked at every snapshot after the first; returning true stops the run
  // with Termination::kCriterion.
  std::function<bool(const Snapshot&)> stop_when;
};

enum class EventKind { kLossBelowInvN, kLossBelowHalfInvN, kKinkCrossing, kPlateau };
std::string to_string(EventKind kind);

struct FlowEvent {
  EventKind kind;
  double t;
  double tau;
  int neuron = -1;  // kink crossings only
  int sample = -1;
};

struct Snapshot {
  double t = 0.0;        // physical time; may be +inf once log1p_t exceeds ~709
  double log1p_t = 0.0;
  double tau = 0.0;
  Params params;
  double loss = 0.0;
  double log_loss = 0.0;
  double min_margin = 0.0;
  double normalized_margin = 0.0;  // min margin / |theta|^2
  double gradient_norm = 0.0;      // |grad L|
  double grad_over_loss_norm = 0.0;  // |grad L| / L
  double norm = 0.0;
  double path_length = 0.0;        // int |d theta| up to here
  std::vector<double> direction;   // theta / |theta|
};

enum class Termination {
  kMaxTime,
  kMaxTau,
  kStepLimit,
  kLossFloor,
  kHalvingCap,
  kSmallLoss,
  kPlateau,
  kStepUnderflow,
  kNonFinite,
  kCriterion
};
std::string to_string(Termination t);

struct Trajectory {
  std::vector<Snapshot> snapshots;
  std::vector<FlowEvent> events;  // kink events beyond max_stored_events are only counted
  std::size_t kink_crossings = 0;
  std::size_t sliding_entries = 0;  // times a pair was held on its kink
  std::size_t steps_accepted = 0;
  std::size_t steps_rejected = 0;
  std::size_t rhs_evaluations = 0;
  Termination termination = Termination::kMaxTau;
  std::string diagnostic;  // set on abnormal termination
  double t0 = std::numeric_limits<double>::infinity();  // first time with L <= 1/(2n)
  double t_inv_n = std::numeric_limits<double>::infinity();  // first time with L < 1/n
  double pl_min_pre_t0 = std::numeric_limits<double>::infinity();  // over every accepted step
  double path_length_pre_t0 = 0.0;
  double loss0 = 0.0;
  std::size_t n = 0;

  const Snapshot& last() const { return snapshots.back(); }
  bool reached(EventKind kind) const;
};

Trajectory integrate(const Params& p0, const Dataset& d, LossKind kind, const FlowConfig& cfg);

struct DirectionEstimate {
  std::vector<double> direction;  // last snapshot direction
  double residual;                // max pairwise angle over the window
  std::size_t window_size;
};

/// Window = last `window` snapshots (at least 1).
DirectionEstimate direction_of(const Trajectory& tr, std::size_t window);

/// Angle between two unit vectors, accurate for tiny angles.
double angle_between(const std::vector<double>& a, const std::vector<double>& b);

struct PLPoint {
  double t;
  double ratio;  // |grad L|^2 / (2 L)
};

struct PLDiagnostic {
  std::vector<PLPoint> points;
  double lambda_hat;  // min ratio while L >= 1/(2n), including unrecorded steps
};

PLDiagnostic pl_diagnostic(const Trajectory& tr, const Dataset& d);

struct PathLength {
  double total;             // int |theta'| dt
  double pre_t0;            // same, up to t0 (or total if t0 never reached)
  double max_hidden_shift;  // max_j,t |(w_j, b_j)(t) - (w_j, b_j)(0)| over snapshots
  double displacement;      // |theta(end) - theta(0)|
};

PathLength trajectory_length(const Trajectory& tr);

nlohmann::ordered_json to_json(const Snapshot& s, bool with_params = true);
nlohmann::ordered_json summary_json(const Trajectory& tr);
void write_jsonl(std::ostream& os, const Trajectory& tr);
/// Columns t, tau, loss, log_loss, min_margin, norm.
void write_csv(std::ostream& os, const Trajectory& tr);

}  // namespace relugf
