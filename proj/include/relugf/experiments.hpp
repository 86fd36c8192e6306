#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "relugf/config.hpp"
#include "relugf/data.hpp"
#include "relugf/flow.hpp"
#include "relugf/kkt.hpp"
#include "relugf/loss.hpp"

namespace relugf {

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Rows of strings under fixed column names, written as CSV.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
  void write_csv(std::ostream& os) const;
};

/// Shortest decimal that round-trips, so tables are reproducible byte for byte.
std::string fmt(double x);

struct ExperimentResult {
  std::string kind;
  Config config;
  std::vector<RunRecord> records;
  std::vector<Check> checks;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  std::map<std::string, Table> tables;  // name -> table, written as <name>.csv
  std::map<std::string, nlohmann::ordered_json> artifacts;  // relative path -> content

  bool pass() const;
};

// Shared pieces of the harness.

Distribution distribution_from(const Config& cfg);
/// init.sigma_o is a number, "practical" (practical_sigma_o) or "theorem"
/// (1 / (4 k R sigma_h log(6k/delta)) at the configured sigma_h).
InitConfig init_config_from(const Config& cfg, std::size_t k, std::uint64_t seed,
                            double support_radius = 1.0);
/// Independent streams from one config seed (splitmix64 of the three words).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);
LossKind loss_from(const Config& cfg);

/// Loss nonincreasing across snapshots, with slack 10 rel_tol L(0).
bool loss_monotone(const Trajectory& tr, double rel_tol);

/// Training until the margin-normalized direction is an approximate KKT
/// point. After L < 1/n, the snapshot is certified every time |theta| grows by
/// check_growth. The run stops as "certified" once max(stationarity,
/// complementarity) <= target, as "stalled" once the residual exceeds
/// stall_ratio times its value from stall_window-fold smaller |theta|, and
/// otherwise on the flow budget ("budget"), or "not-separated" when L < 1/n
/// is never reached.
struct KKTTrainOptions {
  double target = 1e-3;
  double tau = 1e-3;
  double check_growth = 1.5;
  double stall_window = 100.0;
  double stall_ratio = 0.5;
};

struct KKTRun {
  Trajectory trajectory;
  std::string outcome;
  bool separated = false;
  Params normalized;           // last snapshot scaled to margin one (if separated)
  KKTCertificate certificate;  // of `normalized`
  double residual = 1.0;
  std::size_t checks = 0;
};

KKTRun train_to_kkt(const Params& p0, const Dataset& d, LossKind kind, FlowConfig flow,
                    const KKTTrainOptions& opt);

/// P_x[label_of(N(x)) != label of the teacher] for x ~ dist, by splitting the
/// support at every breakpoint of N, every zero of N and every change point
/// of the teacher.
double test_error_exact(const Params& p, const TeacherSpec& spec, const Distribution& dist);

/// Monte Carlo estimate of the same probability.
double test_error_mc(const Params& p, const TeacherSpec& spec, const Distribution& dist,
                     std::size_t samples, std::uint64_t seed);

// Experiments. Each takes a config built by make_config for its kind.

ExperimentResult run_example1(const Config& cfg);
ExperimentResult run_train(const Config& cfg);  // kinds optimize and implicit-bias
ExperimentResult run_region_sweep(const Config& cfg);
ExperimentResult run_dormant_census(const Config& cfg);
ExperimentResult run_generalization(const Config& cfg);
ExperimentResult run_pl(const Config& cfg);
ExperimentResult run_separability_mc(const Config& cfg);

/// Dispatches on cfg["kind"].
ExperimentResult run_experiment(const Config& cfg);

/// Writes summary.json, records.<csv|json> and every table into `dir`.
void write_result(const ExperimentResult& res, const std::string& dir, const std::string& format);

}  // namespace relugf
