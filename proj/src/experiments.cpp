#include "relugf/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "relugf/init.hpp"
#include "relugf/kkt.hpp"
#include "relugf/piecewise.hpp"
#include "relugf/regions.hpp"
#include "relugf/sep.hpp"

namespace relugf {

namespace {

using ojson = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string run_tag(const std::vector<std::pair<std::string, long long>>& parts) {
  std::string t;
  for (const auto& [k, v] : parts) {
    if (!t.empty()) t += "_";
    t += k + std::to_string(v);
  }
  return t;
}

unsigned threads_of(const Config& cfg) { return cfg.value("threads", 0u); }

FlowConfig flow_of(const Config& cfg) {
  FlowConfig f = flow_config_from(cfg.value("flow", Config::object()));
  f.policy.kink_value = cfg.value("kink_value", 0.0);
  return f;
}

std::vector<std::uint64_t> seeds_of(const Config& cfg) { return grid<std::uint64_t>(cfg, "seeds"); }

// Widths given as numbers or as multiples of r ("4r").
std::size_t width_of(const Config& entry, int r) {
  if (entry.is_number()) return entry.get<std::size_t>();
  const std::string s = entry.get<std::string>();
  if (s.empty() || s.back() != 'r') throw std::invalid_argument("bad width entry: " + s);
  const double factor = s.size() == 1 ? 1.0 : std::stod(s.substr(0, s.size() - 1));
  return static_cast<std::size_t>(std::llround(factor * r));
}

void add_trajectory_rows(Table& t, const std::string& run, const Trajectory& tr) {
  if (t.columns.empty()) t.columns = {"run", "t", "metric", "value"};
  for (const auto& s : tr.snapshots) {
    const std::string time = fmt(s.t);
    t.add({run, time, "log1p_t", fmt(s.log1p_t)});
    t.add({run, time, "tau", fmt(s.tau)});
    t.add({run, time, "log_loss", fmt(s.log_loss)});
    t.add({run, time, "norm", fmt(s.norm)});
    t.add({run, time, "normalized_margin", fmt(s.normalized_margin)});
  }
}

Check make_check(std::string name, bool pass, std::string detail) {
  return Check{std::move(name), pass, std::move(detail)};
}

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  m.count = xs.size();
  if (xs.empty()) return m;
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / (xs.size() - 1));
  }
  return m;
}

}  // namespace

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

void Table::write_csv(std::ostream& os) const {
  std::vector<std::string> head;
  for (const auto& c : columns) head.push_back(csv_field(c));
  os << join(head, ",") << '\n';
  for (const auto& row : rows) {
    std::vector<std::string> cells;
    for (const auto& c : row) cells.push_back(csv_field(c));
    os << join(cells, ",") << '\n';
  }
}

bool ExperimentResult::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ index);
}

Distribution distribution_from(const Config& cfg) {
  if (!cfg.contains("distribution")) return Distribution::uniform(1.0);
  return Distribution::from_json(ojson::parse(cfg.at("distribution").dump()));
}

LossKind loss_from(const Config& cfg) {
  return loss_kind_from_string(cfg.value("loss", std::string("exponential")));
}

InitConfig init_config_from(const Config& cfg, std::size_t k, std::uint64_t seed,
                            double support_radius) {
  const Config init = cfg.value("init", Config::object());
  InitConfig ic;
  ic.k = k;
  ic.seed = seed;
  ic.sigma_h = init.value("sigma_h", 1.0);
  const std::string law = init.value("law", std::string("gaussian"));
  if (law == "gaussian") ic.law = InitLaw::kGaussian;
  else if (law == "uniform") ic.law = InitLaw::kUniform;
  else throw std::invalid_argument("unknown init law: " + law);
  const double delta = init.value("delta", 0.5);
  const Config so = init.value("sigma_o", Config("practical"));
  if (so.is_number()) {
    ic.sigma_o = so.get<double>();
  } else if (so == "practical") {
    ic.sigma_o = practical_sigma_o(k, support_radius, ic.sigma_h, delta);
  } else if (so == "theorem") {
    const double kk = static_cast<double>(k);
    ic.sigma_o = 1.0 / (4.0 * kk * support_radius * ic.sigma_h * std::log(6.0 * kk / delta));
  } else {
    throw std::invalid_argument("init.sigma_o must be a number, \"practical\" or \"theorem\"");
  }
  return ic;
}

bool loss_monotone(const Trajectory& tr, double rel_tol) {
  const double slack = 10.0 * rel_tol * tr.loss0;
  for (std::size_t s = 1; s < tr.snapshots.size(); ++s) {
    if (tr.snapshots[s].loss > tr.snapshots[s - 1].loss + slack) return false;
  }
  return true;
}

KKTRun train_to_kkt(const Params& p0, const Dataset& d, LossKind kind, FlowConfig flow,
                    const KKTTrainOptions& opt) {
  KKTRun run;
  const double log_inv_n = -std::log(static_cast<double>(d.size()));
  double next_check = 0.0;
  std::vector<std::pair<double, double>> history;  // (|theta|, residual)
  bool certified = false;
  bool stalled = false;

  auto residual_of = [](const KKTCertificate& c) {
    return c.uninformative ? 1.0 : std::max(c.stationarity_residual, c.complementarity_residual);
  };
  auto assess = [&](const Snapshot& s) {
    run.normalized = normalize_to_margin_one(s.params, d);
    run.certificate = certify(run.normalized, d, flow.policy, opt.tau);
    run.residual = residual_of(run.certificate);
    run.separated = true;
    ++run.checks;
  };

  flow.keep_params = true;
  flow.stop_when = [&](const Snapshot& s) {
    if (!(s.log_loss < log_inv_n) || s.min_margin <= 0.0 || s.norm < next_check) return false;
    next_check = s.norm * opt.check_growth;
    assess(s);
    if (run.residual <= opt.target) return certified = true;
    // Compare with the newest check made at a stall_window-fold smaller norm.
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
      if (it->first * opt.stall_window <= s.norm) {
        if (run.residual > opt.stall_ratio * it->second) stalled = true;
        break;
      }
    }
    history.emplace_back(s.norm, run.residual);
    return stalled;
  };

  run.trajectory = integrate(p0, d, kind, flow);
  const Snapshot& last = run.trajectory.last();
  if (!certified && !stalled) {
    if (last.log_loss < log_inv_n && last.min_margin > 0.0) {
      assess(last);
      certified = run.residual <= opt.target;
    } else {
      run.separated = false;
      run.residual = 1.0;
    }
  }
  if (certified) run.outcome = "certified";
  else if (stalled) run.outcome = "stalled";
  else if (!run.separated) run.outcome = "not-separated";
  else if (run.trajectory.termination == Termination::kPlateau) run.outcome = "plateau";
  else if (run.trajectory.termination == Termination::kNonFinite ||
           run.trajectory.termination == Termination::kStepUnderflow) run.outcome = "failed";
  else run.outcome = "budget";
  // Keep memory bounded: only the endpoints carry parameters.
  for (std::size_t s = 1; s + 1 < run.trajectory.snapshots.size(); ++s) {
    run.trajectory.snapshots[s].params = Params();
    run.trajectory.snapshots[s].direction.clear();
  }
  return run;
}

double test_error_exact(const Params& p, const TeacherSpec& spec, const Distribution& dist) {
  const Interval dom = dist.support();
  const PiecewiseLinear f = to_piecewise(p, dom);
  std::vector<double> cuts{dom.lo, dom.hi};
  const auto& bps = f.breakpoints();
  const auto vals = f.node_values();
  // Nodes are domain.lo, breakpoints..., domain.hi.
  std::vector<double> nodes{dom.lo};
  nodes.insert(nodes.end(), bps.begin(), bps.end());
  nodes.push_back(dom.hi);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    cuts.push_back(nodes[i]);
    const double a = vals[i], b = vals[i + 1];
    if ((a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0)) cuts.push_back(nodes[i] - a / f.slopes()[i]);
  }
  for (double c : spec.change_points) cuts.push_back(c);
  for (double c : dist.density_breaks()) cuts.push_back(c);
  std::sort(cuts.begin(), cuts.end());
  double err = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = std::max(cuts[i], dom.lo), hi = std::min(cuts[i + 1], dom.hi);
    if (!(hi > lo)) continue;
    const double mid = 0.5 * (lo + hi);
    if (label_of(evaluate(p, mid)) != spec.label(mid)) err += dist.probability({lo, hi});
  }
  return err;
}

double test_error_mc(const Params& p, const TeacherSpec& spec, const Distribution& dist,
                     std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t wrong = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double x = dist.sample(rng);
    if (label_of(evaluate(p, x)) != spec.label(x)) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(samples);
}

// ---------------------------------------------------------------- example 1

namespace {

struct Example1Run {
  Trajectory tr;
  bool frozen = true;
  double max_second = 0.0;  // max |w2|, |b2|, |v2|
  double max_w1 = 0.0;
  double max_b1_v1_gap = 0.0;
  bool monotone = true;
};

Example1Run example1_flow(const Dataset& d, const FlowConfig& flow) {
  Example1Run out;
  const Params p0({0.0, 0.0}, {1.0, 0.0}, {1.0, 0.0});
  out.tr = integrate(p0, d, LossKind::kExponential, flow);
  double prev_b = -INFINITY, prev_v = -INFINITY;
  for (const auto& s : out.tr.snapshots) {
    const Params& p = s.params;
    out.max_second = std::max({out.max_second, std::abs(p.w()[1]), std::abs(p.b()[1]),
                               std::abs(p.v()[1])});
    out.max_w1 = std::max(out.max_w1, std::abs(p.w()[0]));
    out.max_b1_v1_gap = std::max(out.max_b1_v1_gap, std::abs(p.b()[0] - p.v()[0]));
    if (p.b()[0] < prev_b || p.v()[0] < prev_v) out.monotone = false;
    prev_b = p.b()[0];
    prev_v = p.v()[0];
  }
  return out;
}

}  // namespace

ExperimentResult run_example1(const Config& cfg) {
  const auto start = Clock::now();
  ExperimentResult res;
  res.kind = "example1";
  res.config = cfg;
  const std::string hash = config_hash(cfg);

  const bool flip = cfg.value("flip_labels", false);
  const Dataset d = make_dataset({-4.0, 4.0}, flip ? std::vector<int>{-1, -1} : std::vector<int>{1, 1});
  FlowConfig flow = flow_of(cfg);
  flow.keep_params = true;

  const Example1Run run = example1_flow(d, flow);
  const Snapshot& last = run.tr.last();
  const std::vector<double> target{0.0, 0.0, 1.0 / std::sqrt(2.0), 0.0, 1.0 / std::sqrt(2.0), 0.0};
  const double angle = angle_between(last.direction, target);

  RunRecord rec;
  rec.config_hash = hash;
  rec.seed = 0;
  rec.labels["termination"] = to_string(run.tr.termination);
  rec.labels["labels"] = flip ? "flipped" : "as-specified";
  rec.scalars["final_log_loss"] = last.log_loss;
  rec.scalars["norm"] = last.norm;
  rec.scalars["angle_to_target"] = angle;
  rec.scalars["max_second_neuron"] = run.max_second;
  rec.scalars["max_abs_w1"] = run.max_w1;
  rec.scalars["max_b1_v1_gap"] = run.max_b1_v1_gap;
  rec.scalars["steps"] = static_cast<double>(run.tr.steps_accepted);

  ojson artifact;
  artifact["dataset"] = to_json(d);
  artifact["init"] = run.tr.snapshots.front().params;
  artifact["final"] = last.params;
  artifact["trajectory"] = summary_json(run.tr);

  if (flip) {
    // Exploratory: recorded, not asserted.
    rec.scalars["final_v1"] = last.params.v()[0];
    rec.artifacts["run"] = "runs/example1_flipped.json";
    res.artifacts[rec.artifacts["run"]] = artifact;
    res.records.push_back(rec);
    add_trajectory_rows(res.tables["trajectory"], "example1_flipped", run.tr);
    res.summary["runtime_s"] = seconds_since(start);
    return res;
  }

  // KKT certificate at the endpoint.
  const Params normalized = normalize_to_margin_one(last.params, d);
  const KKTCertificate cert = certify(normalized, d, flow.policy, cfg.value("kkt_tau", 1e-3));
  const double lambda_gap = std::max(std::abs(cert.lambdas[0] - 0.5), std::abs(cert.lambdas[1] - 0.5));
  rec.scalars["stationarity"] = cert.stationarity_residual;
  rec.scalars["complementarity"] = cert.complementarity_residual;
  rec.scalars["lambda_0"] = cert.lambdas[0];
  rec.scalars["lambda_1"] = cert.lambdas[1];
  artifact["normalized"] = normalized;
  artifact["certificate"] = to_json(cert);

  // The smaller-norm feasible point.
  const Params witness({0.5, -0.5}, {0.0, 0.0}, {0.5, 0.5});
  const auto wm = margins(witness, d);
  const double witness_margin = *std::min_element(wm.begin(), wm.end());
  const double witness_sq = witness.squared_norm();
  rec.scalars["witness_squared_norm"] = witness_sq;
  rec.scalars["witness_margin"] = witness_margin;
  rec.scalars["normalized_squared_norm"] = normalized.squared_norm();

  // Policy 0.5 at exact kinks must not change the flow.
  FlowConfig half = flow;
  half.policy.kink_value = flow.policy.kink_value == 0.5 ? 0.0 : 0.5;
  const Example1Run other = example1_flow(d, half);
  bool same = other.tr.snapshots.size() == run.tr.snapshots.size();
  double policy_gap = 0.0;
  if (same) {
    for (std::size_t s = 0; s < run.tr.snapshots.size(); ++s) {
      const auto a = run.tr.snapshots[s].params.flat(), b = other.tr.snapshots[s].params.flat();
      for (std::size_t i = 0; i < a.size(); ++i) policy_gap = std::max(policy_gap, std::abs(a[i] - b[i]));
    }
  }
  same = same && policy_gap == 0.0;
  rec.scalars["policy_gap"] = policy_gap;

  const double runtime = seconds_since(start);
  rec.artifacts["run"] = "runs/example1.json";
  res.artifacts[rec.artifacts["run"]] = artifact;
  res.records.push_back(rec);
  add_trajectory_rows(res.tables["trajectory"], "example1", run.tr);

  res.checks.push_back(make_check("second neuron frozen", run.max_second <= 1e-12,
                                  "max |w2|,|b2|,|v2| = " + fmt(run.max_second)));
  res.checks.push_back(make_check("w1 stays zero", run.max_w1 <= 1e-10, "max |w1| = " + fmt(run.max_w1)));
  res.checks.push_back(make_check("b1 = v1", run.max_b1_v1_gap <= 1e-10,
                                  "max |b1 - v1| = " + fmt(run.max_b1_v1_gap)));
  res.checks.push_back(make_check("b1, v1 increasing", run.monotone && last.params.b()[0] > 1.0,
                                  "final b1 = " + fmt(last.params.b()[0])));
  res.checks.push_back(make_check("direction", angle <= 1e-3, "angle = " + fmt(angle)));
  res.checks.push_back(make_check(
      "KKT at endpoint",
      cert.stationarity_residual <= 1e-6 && cert.complementarity_residual <= 1e-6 &&
          cert.feasibility_margin >= -1e-6 && lambda_gap <= 1e-6 && !cert.uninformative,
      "stationarity " + fmt(cert.stationarity_residual) + ", complementarity " +
          fmt(cert.complementarity_residual) + ", lambda (" + fmt(cert.lambdas[0]) + ", " +
          fmt(cert.lambdas[1]) + ")"));
  res.checks.push_back(make_check(
      "witness", witness_margin >= 1.0 && std::abs(witness_sq - 1.0) <= 1e-12 && witness_sq < 2.0,
      "norm^2 = " + fmt(witness_sq) + ", margin = " + fmt(witness_margin) +
          ", flow endpoint norm^2 = " + fmt(normalized.squared_norm())));
  res.checks.push_back(make_check("kink policy irrelevant", same, "max difference " + fmt(policy_gap)));
  res.checks.push_back(make_check("loss monotone", loss_monotone(run.tr, flow.rel_tol), ""));
  res.checks.push_back(make_check("runtime", runtime <= 10.0, fmt(runtime) + " s"));
  res.summary["runtime_s"] = runtime;
  return res;
}

// ------------------------------------------------------- shared run pieces

namespace {

struct Cell {
  int r = 1;
  std::size_t k = 1;
  std::size_t n = 1;
  std::uint64_t seed = 0;
  double sigma_h = 0.0;  // 0: from config
};

struct TrainedRun {
  RunRecord rec;
  std::string tag;
  ojson artifact;
  Trajectory tr;  // endpoints only carry params
};

struct Prepared {
  TeacherSpec spec;
  Distribution dist;
  Dataset data;
  Params init;
};

Prepared prepare(const Config& cfg, const Cell& c) {
  Prepared p{make_fr_teacher(c.r), distribution_from(cfg), {}, {}};
  p.data = sample_dataset(p.spec, p.dist, c.n, derive_seed(c.seed, 1));
  InitConfig ic = init_config_from(cfg, c.k, derive_seed(c.seed, 2), p.spec.support_radius);
  if (c.sigma_h > 0.0) {
    Config with = cfg;
    with["init"]["sigma_h"] = c.sigma_h;
    ic = init_config_from(with, c.k, derive_seed(c.seed, 2), p.spec.support_radius);
  }
  p.init = sample_init(ic);
  return p;
}

KKTTrainOptions kkt_options(const Config& cfg) {
  KKTTrainOptions o;
  o.target = cfg.value("kkt_threshold", 1e-3);
  o.tau = cfg.value("kkt_tau", 1e-3);
  return o;
}

// Trains one cell to the KKT protocol and fills the scalars shared by the
// implicit-bias, region-sweep and generalization kinds.
TrainedRun train_cell(const Config& cfg, const Cell& c, const std::string& hash) {
  TrainedRun out;
  out.tag = run_tag({{"r", c.r}, {"k", static_cast<long long>(c.k)},
                     {"n", static_cast<long long>(c.n)}, {"seed", static_cast<long long>(c.seed)}});
  const Prepared prep = prepare(cfg, c);
  const FlowConfig flow = flow_of(cfg);
  const KKTTrainOptions opt = kkt_options(cfg);
  KKTRun kr = train_to_kkt(prep.init, prep.data, loss_from(cfg), flow, opt);

  RunRecord& rec = out.rec;
  rec.config_hash = hash;
  rec.seed = c.seed;
  rec.labels["outcome"] = kr.outcome;
  rec.labels["termination"] = to_string(kr.trajectory.termination);
  rec.scalars["r"] = c.r;
  rec.scalars["k"] = static_cast<double>(c.k);
  rec.scalars["n"] = static_cast<double>(c.n);
  const Snapshot& last = kr.trajectory.last();
  rec.scalars["final_loss"] = last.loss;
  rec.scalars["final_log_loss"] = last.log_loss;
  rec.scalars["norm"] = last.norm;
  rec.scalars["normalized_margin"] = last.normalized_margin;
  rec.scalars["t_inv_n"] = kr.trajectory.t_inv_n;
  rec.scalars["steps"] = static_cast<double>(kr.trajectory.steps_accepted);
  rec.scalars["kink_crossings"] = static_cast<double>(kr.trajectory.kink_crossings);
  rec.scalars["sliding_entries"] = static_cast<double>(kr.trajectory.sliding_entries);
  rec.scalars["separated"] = kr.separated;
  rec.scalars["kkt_residual"] = kr.residual;
  rec.scalars["loss_monotone"] = loss_monotone(kr.trajectory, flow.rel_tol);
  rec.scalars["dormant"] = static_cast<double>(dormant_count(prep.init, prep.spec.support()));

  ojson& a = out.artifact;
  a["r"] = c.r;
  a["k"] = c.k;
  a["n"] = c.n;
  a["seed"] = c.seed;
  a["dataset"] = to_json(prep.data);
  a["init"] = prep.init;
  a["final"] = last.params;
  a["trajectory"] = summary_json(kr.trajectory);
  if (kr.separated) {
    rec.scalars["stationarity"] = kr.certificate.stationarity_residual;
    rec.scalars["complementarity"] = kr.certificate.complementarity_residual;
    rec.scalars["kink_pairs"] = static_cast<double>(kr.certificate.kink_pairs);
    const RegionReport regions = count_regions(kr.normalized, region_domain(prep.spec.support_radius));
    const ActivationReport act = activation_points_per_interval(kr.normalized, prep.data, opt.tau);
    const RegionBoundCheck bc = region_bound_check(regions, c.r);
    rec.scalars["region_count"] = static_cast<double>(regions.region_count);
    rec.scalars["region_bound"] = static_cast<double>(bc.bound);
    rec.scalars["region_slack"] = static_cast<double>(bc.slack);
    rec.scalars["max_inner_activations"] = static_cast<double>(act.max_inner);
    rec.scalars["max_outer_activations"] = static_cast<double>(act.max_outer);
    rec.scalars["max_corners"] = static_cast<double>(act.max_corners);
    rec.scalars["test_error"] = test_error_exact(last.params, prep.spec, prep.dist);
    a["normalized"] = kr.normalized;
    a["certificate"] = to_json(kr.certificate);
    a["regions"] = to_json(regions);
  }
  rec.artifacts["run"] = "runs/" + out.tag + ".json";
  out.tr = std::move(kr.trajectory);
  return out;
}

void collect(ExperimentResult& res, std::vector<TrainedRun>& runs, bool trajectories = true) {
  for (auto& r : runs) {
    res.artifacts[r.rec.artifacts["run"]] = std::move(r.artifact);
    if (trajectories) add_trajectory_rows(res.tables["trajectory"], r.tag, r.tr);
    res.records.push_back(std::move(r.rec));
  }
}

double scalar(const RunRecord& r, const std::string& key, double fallback = NAN) {
  const auto it = r.scalars.find(key);
  return it == r.scalars.end() ? fallback : it->second;
}

}  // namespace

// ------------------------------------------------------------ train kinds

ExperimentResult run_train(const Config& cfg) {
  const auto start = Clock::now();
  ExperimentResult res;
  res.kind = cfg.at("kind").get<std::string>();
  res.config = cfg;
  const std::string hash = config_hash(cfg);
  const int r = cfg.at("r").get<int>();
  const std::size_t n = cfg.at("n").get<std::size_t>();
  const std::size_t k = width_of(cfg.at("k"), r);
  std::vector<Cell> cells;
  for (auto s : seeds_of(cfg)) cells.push_back({r, k, n, s});

  bool monotone = true;
  if (res.kind == "implicit-bias") {
    auto runs = parallel_map(cells, [&](const Cell& c) { return train_cell(cfg, c, hash); },
                             threads_of(cfg));
    collect(res, runs);
    std::map<std::string, int> outcomes;
    for (const auto& rec : res.records) {
      ++outcomes[rec.labels.at("outcome")];
      monotone = monotone && scalar(rec, "loss_monotone") == 1.0;
    }
    res.summary["outcomes"] = outcomes;
  } else {
    // Optimization phase only: run to L <= 1/(2n).
    auto one = [&](const Cell& c) {
      TrainedRun out;
      out.tag = run_tag({{"seed", static_cast<long long>(c.seed)}});
      const Prepared prep = prepare(cfg, c);
      FlowConfig flow = flow_of(cfg);
      flow.stop_at_half_inv_n = true;
      Trajectory tr = integrate(prep.init, prep.data, loss_from(cfg), flow);
      const PathLength pl = trajectory_length(tr);
      RunRecord& rec = out.rec;
      rec.config_hash = hash;
      rec.seed = c.seed;
      rec.labels["termination"] = to_string(tr.termination);
      rec.scalars["t0"] = tr.t0;
      rec.scalars["reached"] = std::isfinite(tr.t0);
      rec.scalars["lambda_hat"] = tr.pl_min_pre_t0;
      rec.scalars["path_pre_t0"] = pl.pre_t0;
      rec.scalars["max_hidden_shift"] = pl.max_hidden_shift;
      rec.scalars["final_loss"] = tr.last().loss;
      rec.scalars["loss_monotone"] = loss_monotone(tr, flow.rel_tol);
      out.artifact["dataset"] = to_json(prep.data);
      out.artifact["init"] = prep.init;
      out.artifact["final"] = tr.last().params;
      out.artifact["trajectory"] = summary_json(tr);
      rec.artifacts["run"] = "runs/" + out.tag + ".json";
      out.tr = std::move(tr);
      return out;
    };
    auto runs = parallel_map(cells, one, threads_of(cfg));
    collect(res, runs);
    for (const auto& rec : res.records) monotone = monotone && scalar(rec, "loss_monotone") == 1.0;
  }
  res.checks.push_back(make_check("loss monotone", monotone, ""));
  res.summary["runtime_s"] = seconds_since(start);
  return res;
}

// ------------------------------------------------------------ region sweep

ExperimentResult run_region_sweep(const Config& cfg) {
  const auto start = Clock::now();
  ExperimentResult res;
  res.kind = "region-sweep";
  res.config = cfg;
  const std::string hash = config_hash(cfg);

  std::vector<Cell> cells;
  for (int r : grid<int>(cfg, "r_grid")) {
    std::set<std::size_t> widths;  // "20r" and 200 can coincide
    for (const auto& e : cfg.at("k_grid")) widths.insert(width_of(e, r));
    for (std::size_t k : widths)
      for (std::size_t n : grid<std::size_t>(cfg, "n_grid"))
        for (auto s : seeds_of(cfg)) cells.push_back({r, k, n, s});
  }
  auto runs = parallel_map(cells, [&](const Cell& c) { return train_cell(cfg, c, hash); },
                           threads_of(cfg));
  collect(res, runs, cfg.value("trajectory_table", true));

  Table& cell_table = res.tables["cells"];
  cell_table.columns = {"r", "k", "n", "runs", "certified", "passed", "max_regions", "bound",
                        "stalled", "other_excluded"};
  std::map<std::tuple<int, std::size_t, std::size_t>, std::vector<const RunRecord*>> by_cell;
  for (const auto& rec : res.records)
    by_cell[{static_cast<int>(scalar(rec, "r")), static_cast<std::size_t>(scalar(rec, "k")),
             static_cast<std::size_t>(scalar(rec, "n"))}]
        .push_back(&rec);

  std::size_t included = 0, passed = 0, at_least_r = 0, total = 0;
  bool monotone = true;
  std::map<std::string, int> outcomes;
  std::string failures;
  for (const auto& [key, recs] : by_cell) {
    const auto [r, k, n] = key;
    std::size_t cert = 0, pass = 0, stalled = 0, other = 0;
    double max_regions = 0.0;
    for (const RunRecord* rec : recs) {
      ++total;
      const std::string& outcome = rec->labels.at("outcome");
      ++outcomes[outcome];
      monotone = monotone && scalar(*rec, "loss_monotone") == 1.0;
      if (outcome != "certified") {
        (outcome == "stalled" ? stalled : other) += 1;
        continue;
      }
      ++cert;
      const double regions = scalar(*rec, "region_count");
      max_regions = std::max(max_regions, regions);
      const bool ok = regions <= scalar(*rec, "region_bound");
      const bool enough = regions >= r;
      pass += ok;
      at_least_r += enough;
      if (!ok || !enough) failures += " " + rec->artifacts.at("run");
    }
    included += cert;
    passed += pass;
    cell_table.add({std::to_string(r), std::to_string(k), std::to_string(n), std::to_string(recs.size()),
                    std::to_string(cert), std::to_string(pass), fmt(max_regions),
                    std::to_string(32 * r + 67), std::to_string(stalled), std::to_string(other)});
  }
  const double runtime = seconds_since(start);
  res.summary["runs"] = total;
  res.summary["certified"] = included;
  res.summary["outcomes"] = outcomes;
  res.summary["runtime_s"] = runtime;
  res.checks.push_back(make_check(
      "region bound on certified runs", included > 0 && passed == included,
      std::to_string(passed) + "/" + std::to_string(included) + " certified runs within 32r+67 (" +
          std::to_string(total - included) + " of " + std::to_string(total) + " excluded)" + failures));
  res.checks.push_back(make_check("at least r regions", at_least_r == included,
                                  std::to_string(at_least_r) + "/" + std::to_string(included)));
  res.checks.push_back(make_check("loss monotone", monotone, ""));
  return res;
}

// --------------------------------------------------------- generalization

ExperimentResult run_generalization(const Config& cfg) {
  const auto start = Clock::now();
  ExperimentResult res;
  res.kind = "generalization";
  res.config = cfg;
  const std::string hash = config_hash(cfg);
  const int r = cfg.at("r").get<int>();
  const std::size_t k = width_of(cfg.at("k"), r);
  const auto ns = grid<std::size_t>(cfg, "n_grid");
  const std::size_t mc = cfg.value("mc_samples", std::size_t{1000000});

  std::vector<Cell> cells;
  for (std::size_t n : ns)
    for (auto s : seeds_of(cfg)) cells.push_back({r, k, n, s});
  auto one = [&](const Cell& c) {
    TrainedRun t = train_cell(cfg, c, hash);
    if (scalar(t.rec, "separated") == 1.0) {
      const TeacherSpec spec = make_fr_teacher(c.r);
      const Distribution dist = distribution_from(cfg);
      t.rec.scalars["test_error_mc"] = test_error_mc(t.tr.last().params, spec, dist, mc, derive_seed(c.seed, 3, c.n));
    }
    return t;
  };
  auto runs = parallel_map(cells, one, threads_of(cfg));
  collect(res, runs, cfg.value("trajectory_table", true));

  Table& table = res.tables["test_error"];
  table.columns = {"n", "runs", "successful", "mean_test_error", "sd_test_error", "mc_mean", "mc_z"};
  std::vector<double> means;
  bool mc_ok = true, monotone = true;
  std::string mc_detail;
  for (std::size_t n : ns) {
    std::vector<double> errs;
    double diff = 0.0, var = 0.0;
    std::size_t runs_n = 0;
    for (const auto& rec : res.records) {
      if (static_cast<std::size_t>(scalar(rec, "n")) != n) continue;
      ++runs_n;
      monotone = monotone && scalar(rec, "loss_monotone") == 1.0;
      if (scalar(rec, "separated") != 1.0) continue;
      const double p = scalar(rec, "test_error");
      errs.push_back(p);
      diff += scalar(rec, "test_error_mc") - p;
      var += p * (1.0 - p) / static_cast<double>(mc);
    }
    const Moments m = moments(errs);
    means.push_back(m.mean);
    // Pooled over seeds: sum of MC deviations against its exact standard error.
    const double se = std::sqrt(var);
    const double z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : INFINITY);
    if (!(std::abs(z) <= 3.0)) mc_ok = false;
    mc_detail += " n=" + std::to_string(n) + ": z=" + fmt(z);
    table.add({std::to_string(n), std::to_string(runs_n), std::to_string(m.count), fmt(m.mean),
               fmt(m.sd), fmt(m.count ? m.mean + diff / m.count : NAN), fmt(z)});
  }
  bool nonincreasing = true;
  int inversions = 0;
  std::string mean_detail;
  for (std::size_t i = 0; i < means.size(); ++i) {
    mean_detail += (i ? ", " : "") + fmt(means[i]);
    if (i && means[i] > means[i - 1]) {
      nonincreasing = false;
      ++inversions;
    }
  }
  res.summary["mean_test_error"] = means;
  res.summary["inversions"] = inversions;
  res.summary["runtime_s"] = seconds_since(start);
  res.checks.push_back(make_check("exact vs Monte Carlo", mc_ok, mc_detail));
  res.checks.push_back(make_check("test error nonincreasing in n", nonincreasing, mean_detail));
  if (!means.empty())
    res.checks.push_back(make_check("test error at largest n", means.back() <= 0.05,
                                    "mean " + fmt(means.back()) + " at n=" + std::to_string(ns.back())));
  res.checks.push_back(make_check("loss monotone", monotone, ""));
  return res;
}

// ---------------------------------------------------------- PL diagnostics

ExperimentResult run_pl(const Config& cfg) {
  const auto start = Clock::now();
  ExperimentResult res;
  res.kind = "pl-diagnostics";
  res.config = cfg;
  const std::string hash = config_hash(cfg);
  const double factor = cfg.value("width_factor", 30.0);

  std::vector<Cell> cells;
  for (int r : grid<int>(cfg, "r_grid")) {
    const std::size_t k = static_cast<std::size_t>(std::ceil(factor / make_fr_teacher(r).shortest_interval));
    for (std::size_t n : grid<std::size_t>(cfg, "n_grid"))
      for (double sh : grid<double>(cfg, "sigma_h_grid"))
        for (auto s : seeds_of(cfg)) cells.push_back({r, k, n, s, sh});
  }
  auto one = [&](const Cell& c) {
    TrainedRun out;
    out.tag = run_tag({{"r", c.r}, {"n", static_cast<long long>(c.n)},
                       {"sh", std::llround(c.sigma_h)}, {"seed", static_cast<long long>(c.seed)}});
    const Prepared prep = prepare(cfg, c);
    FlowConfig flow = flow_of(cfg);
    flow.keep_params = true;  // short runs; needed for max_hidden_shift
    Trajectory tr = integrate(prep.init, prep.data, loss_from(cfg), flow);
    const double lam = tr.pl_min_pre_t0;
    // Replay L(t) <= exp(-2 lam t) L(0) over the snapshots up to t0.
    bool decay = true;
    double worst = 0.0;
    for (const auto& s : tr.snapshots) {
      if (s.t > tr.t0) break;
      const double ratio = s.loss / (std::exp(-2.0 * lam * s.t) * tr.loss0);
      worst = std::max(worst, ratio);
      if (ratio > 1.0 + 1e-7) decay = false;
    }
    const PathLength pl = trajectory_length(tr);
    const double path_bound = std::sqrt(2.0 * tr.loss0 / lam);
    RunRecord& rec = out.rec;
    rec.config_hash = hash;
    rec.seed = c.seed;
    rec.labels["termination"] = to_string(tr.termination);
    rec.scalars["r"] = c.r;
    rec.scalars["k"] = static_cast<double>(c.k);
    rec.scalars["n"] = static_cast<double>(c.n);
    rec.scalars["sigma_h"] = c.sigma_h;
    rec.scalars["reached"] = std::isfinite(tr.t0);
    rec.scalars["t0"] = tr.t0;
    rec.scalars["lambda_hat"] = lam;
    rec.scalars["decay_ratio_max"] = worst;
    rec.scalars["decay_ok"] = decay;
    rec.scalars["path_pre_t0"] = pl.pre_t0;
    rec.scalars["path_bound"] = path_bound;
    rec.scalars["max_hidden_shift"] = pl.max_hidden_shift;
    rec.scalars["loss_monotone"] = loss_monotone(tr, flow.rel_tol);
    out.artifact["dataset"] = to_json(prep.data);
    out.artifact["init"] = prep.init;
    out.artifact["trajectory"] = summary_json(tr);
    rec.artifacts["run"] = "runs/" + out.tag + ".json";
    out.tr = std::move(tr);
    return out;
  };
  auto runs = parallel_map(cells, one, threads_of(cfg));
  collect(res, runs, cfg.value("trajectory_table", true));

  Table& table = res.tables["cells"];
  table.columns = {"r", "k", "n", "sigma_h", "runs", "reached", "min_lambda_hat", "max_t0"};
  std::map<std::tuple<int, std::size_t, double>, std::vector<const RunRecord*>> by_cell;
  for (const auto& rec : res.records)
    by_cell[{static_cast<int>(scalar(rec, "r")), static_cast<std::size_t>(scalar(rec, "n")),
             scalar(rec, "sigma_h")}]
        .push_back(&rec);
  bool reach_ok = true, pl_ok = true, decay_ok = true, path_ok = true, monotone = true;
  std::string reach_detail;
  double min_lambda = INFINITY;
  for (const auto& [key, recs] : by_cell) {
    std::size_t reached = 0;
    double lam = INFINITY, t0 = 0.0;
    for (const RunRecord* rec : recs) {
      const bool hit = scalar(*rec, "reached") == 1.0;
      reached += hit;
      lam = std::min(lam, scalar(*rec, "lambda_hat"));
      if (hit) t0 = std::max(t0, scalar(*rec, "t0"));
      pl_ok = pl_ok && scalar(*rec, "lambda_hat") >= 1e-6;
      decay_ok = decay_ok && scalar(*rec, "decay_ok") == 1.0;
      path_ok = path_ok && (!hit || scalar(*rec, "path_pre_t0") <= scalar(*rec, "path_bound") * (1 + 1e-9));
      monotone = monotone && scalar(*rec, "loss_monotone") == 1.0;
    }
    min_lambda = std::min(min_lambda, lam);
    const auto [r, n, sh] = key;
    if (10 * reached < 9 * recs.size()) reach_ok = false;
    reach_detail += " (r=" + std::to_string(r) + ",n=" + std::to_string(n) + ",sh=" + fmt(sh) +
                    "):" + std::to_string(reached) + "/" + std::to_string(recs.size());
    table.add({std::to_string(r), fmt(scalar(*recs.front(), "k")), std::to_string(n), fmt(sh),
               std::to_string(recs.size()), std::to_string(reached), fmt(lam), fmt(t0)});
  }
  res.summary["runtime_s"] = seconds_since(start);
  res.checks.push_back(make_check("small loss reached in >= 90% of seeds", reach_ok, reach_detail));
  res.checks.push_back(make_check("PL ratio >= 1e-6 before t0", pl_ok, "min lambda_hat " + fmt(min_lambda)));
  res.checks.push_back(make_check("decay bound replay", decay_ok, ""));
  res.checks.push_back(make_check("path length bound", path_ok, ""));
  res.checks.push_back(make_check("loss monotone", monotone, ""));
  return res;
}

// --------------------------------------------------------- dormancy census

ExperimentResult run_dormant_census(const Config& cfg) {
  const auto start = Clock::now();
  ExperimentResult res;
  res.kind = "dormant-census";
  res.config = cfg;
  const std::string hash = config_hash(cfg);
  const std::uint64_t base = seeds_of(cfg).front();
  const std::size_t draws = cfg.at("draws").get<std::size_t>();
  const Interval support{-1.0, 1.0};

  Table& census = res.tables["census"];
  census.columns = {"k", "draws", "neuron_rate", "rate_z", "p_hat_heavy", "p_exact_heavy", "heavy_se"};
  bool rate_ok = true, heavy_ok = true;
  std::string rate_detail, heavy_detail;
  for (std::size_t k : grid<std::size_t>(cfg, "k_grid")) {
    const std::size_t quarter = (k + 3) / 4;
    std::size_t dormant = 0, heavy = 0;
    for (std::size_t i = 0; i < draws; ++i) {
      const Params p = sample_init(init_config_from(cfg, k, derive_seed(base, 10 + k, i)));
      const std::size_t c = dormant_count(p, support);
      dormant += c;
      heavy += c >= quarter;
    }
    const double m = static_cast<double>(draws * k);
    const double rate = dormant / m;
    const double z = (rate - 0.25) / std::sqrt(0.25 * 0.75 / m);
    const double p_hat = static_cast<double>(heavy) / draws;
    const double se = std::sqrt(p_hat * (1.0 - p_hat) / draws);
    const double exact = k <= 64 ? dormant_tail_exact(static_cast<unsigned>(k)).probability : NAN;
    if (std::abs(z) > 4.0) rate_ok = false;
    if (p_hat < 0.25 - 3.0 * se) heavy_ok = false;
    rate_detail += " k=" + std::to_string(k) + ": z=" + fmt(z);
    heavy_detail += " k=" + std::to_string(k) + ": " + fmt(p_hat) + " (exact " + fmt(exact) + ")";
    census.add({std::to_string(k), std::to_string(draws), fmt(rate), fmt(z), fmt(p_hat), fmt(exact), fmt(se)});
  }
  bool exact_ok = true;
  for (unsigned k = 1; k <= 64; ++k) exact_ok = exact_ok && dormant_tail_exact(k).at_least_quarter;
  res.checks.push_back(make_check("per-neuron dormancy rate", rate_ok, rate_detail));
  res.checks.push_back(make_check("P[>= quarter dormant] >= 0.25 (sampled)", heavy_ok, heavy_detail));
  res.checks.push_back(make_check("P[>= quarter dormant] >= 0.25 (exact, k <= 64)", exact_ok, ""));

  // alpha = 1: k = r; dormant-heavy draws are trained and the population loss
  // is followed along the flow.
  struct Heavy {
    int r;
    std::uint64_t seed;
  };
  std::vector<Heavy> heavy_runs;
  const std::size_t want = cfg.value("heavy_runs", std::size_t{5});
  for (int r : grid<int>(cfg, "r_grid")) {
    const std::size_t k = static_cast<std::size_t>(r), quarter = (k + 3) / 4;
    std::size_t found = 0;
    for (std::uint64_t i = 0; found < want && i < 100000; ++i) {
      const std::uint64_t s = derive_seed(base, 1000 + r, i);
      if (dormant_count(sample_init(init_config_from(cfg, k, s)), support) >= quarter) {
        heavy_runs.push_back({r, s});
        ++found;
      }
    }
  }
  const double alpha = 1.0;
  const double bound = 0.25 * (1.0 - 0.75 * alpha);
  const std::size_t n = cfg.value("n", std::size_t{100});
  const LossKind kind = loss_from(cfg);
  auto one = [&](const Heavy& h) {
    TrainedRun out;
    out.tag = run_tag({{"r", h.r}, {"draw", static_cast<long long>(h.seed % 1000000)}});
    const TeacherSpec spec = make_fr_teacher(h.r);
    const Distribution dist = distribution_from(cfg);
    const Dataset d = sample_dataset(spec, dist, n, derive_seed(h.seed, 1));
    const Params p0 = sample_init(init_config_from(cfg, static_cast<std::size_t>(h.r), h.seed));
    FlowConfig flow = flow_of(cfg);
    flow.keep_params = true;
    Trajectory tr = integrate(p0, d, kind, flow);
    std::vector<std::size_t> dormant;
    for (std::size_t j = 0; j < p0.width(); ++j) {
      const Params single({p0.w()[j]}, {p0.b()[j]}, {p0.v()[j]});
      if (dormant_count(single, spec.support()) == 1) dormant.push_back(j);
    }
    double min_loss = INFINITY, frozen = 0.0, quad_err = 0.0;
    for (const auto& s : tr.snapshots) {
      const QuadratureResult q = population_loss(s.params, spec, dist, kind);
      min_loss = std::min(min_loss, q.value);
      quad_err = std::max(quad_err, q.error);
      for (std::size_t j : dormant) {
        frozen = std::max({frozen, std::abs(s.params.w()[j] - p0.w()[j]),
                           std::abs(s.params.b()[j] - p0.b()[j]), std::abs(s.params.v()[j] - p0.v()[j])});
      }
    }
    RunRecord& rec = out.rec;
    rec.config_hash = hash;
    rec.seed = h.seed;
    rec.labels["termination"] = to_string(tr.termination);
    rec.scalars["r"] = h.r;
    rec.scalars["k"] = h.r;
    rec.scalars["dormant"] = static_cast<double>(dormant.size());
    rec.scalars["min_population_loss"] = min_loss;
    rec.scalars["quadrature_error"] = quad_err;
    rec.scalars["bound"] = bound;
    rec.scalars["dormant_displacement"] = frozen;
    rec.scalars["final_empirical_loss"] = tr.last().loss;
    rec.scalars["snapshots"] = static_cast<double>(tr.snapshots.size());
    out.artifact["dataset"] = to_json(d);
    out.artifact["init"] = p0;
    out.artifact["final"] = tr.last().params;
    out.artifact["trajectory"] = summary_json(tr);
    rec.artifacts["run"] = "runs/" + out.tag + ".json";
    for (auto& s : tr.snapshots) s.params = Params();  // the table does not need them
    out.tr = std::move(tr);
    return out;
  };
  auto runs = parallel_map(heavy_runs, one, threads_of(cfg));
  collect(res, runs);
  bool loss_ok = true, frozen_ok = true;
  std::string loss_detail;
  for (const auto& rec : res.records) {
    loss_ok = loss_ok && scalar(rec, "min_population_loss") >= bound - 1e-6;
    frozen_ok = frozen_ok && scalar(rec, "dormant_displacement") <= 1e-12;
    loss_detail += " " + fmt(scalar(rec, "min_population_loss"));
  }
  res.checks.push_back(make_check("alpha = 1 population loss >= 1/16",
                                  loss_ok && res.records.size() == heavy_runs.size() && !heavy_runs.empty(),
                                  std::to_string(res.records.size()) + " runs, min losses" + loss_detail));
  res.checks.push_back(make_check("dormant neurons frozen", frozen_ok, ""));
  res.summary["runtime_s"] = seconds_since(start);
  return res;
}

// ------------------------------------------------------- separability MC

ExperimentResult run_separability_mc(const Config& cfg) {
  const auto start = Clock::now();
  ExperimentResult res;
  res.kind = "separability-mc";
  res.config = cfg;
  const std::string hash = config_hash(cfg);
  const int r = cfg.at("r").get<int>();
  const std::size_t n = cfg.at("n").get<std::size_t>();
  const TeacherSpec spec = make_fr_teacher(r);
  const Distribution dist = distribution_from(cfg);
  const double sep_delta = cfg.value("separability_delta", 0.2);
  const std::size_t k = cfg.at("k").is_string() && cfg.at("k") == "theorem"
                            ? static_cast<std::size_t>(std::ceil(theoretical_constants(spec, n, sep_delta).k_min))
                            : width_of(cfg.at("k"), r);
  const std::size_t wanted = cfg.value("configurations", std::size_t{50});
  const LossKind kind = loss_from(cfg);

  // Separability frequency at init, and the gradient lower bound on the
  // first `wanted` separable draws with L >= 1/(2n).
  struct Draw {
    bool separable;
    double loss, half_grad_sq, bound;
    SeparabilityConstants c;
  };
  auto one = [&](std::uint64_t seed) {
    const Dataset d = sample_dataset(spec, dist, n, derive_seed(seed, 1));
    const Params p = sample_init(init_config_from(cfg, k, derive_seed(seed, 2), spec.support_radius));
    const SeparabilityResult s = check_separability(p, d, spec.support_radius);
    Draw out{s.separable, empirical_loss(p, d, kind), NAN, NAN, s.constants};
    if (s.separable) {
      const auto g = loss_gradient(p, d, kind).flat();
      double sq = 0.0;
      for (double x : g) sq += x * x;
      out.half_grad_sq = 0.5 * sq;
      out.bound = grad_lower_bound(s.constants, n);
    }
    return out;
  };
  const auto seeds = seeds_of(cfg);
  const auto draws = parallel_map(seeds, one, threads_of(cfg));
  Table& table = res.tables["separability"];
  table.columns = {"seed", "separable", "loss", "half_grad_sq", "bound", "gamma", "m", "M", "q", "Q"};
  std::size_t separable = 0, used = 0, violations = 0;
  double min_ratio = INFINITY;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const Draw& dr = draws[i];
    separable += dr.separable;
    table.add({std::to_string(seeds[i]), dr.separable ? "1" : "0", fmt(dr.loss), fmt(dr.half_grad_sq),
               fmt(dr.bound), fmt(dr.c.gamma), fmt(dr.c.m), fmt(dr.c.M), fmt(dr.c.q), fmt(dr.c.Q)});
    if (!dr.separable || used >= wanted || dr.loss < 0.5 / n) continue;
    ++used;
    violations += !(dr.half_grad_sq >= dr.bound);
    min_ratio = std::min(min_ratio, dr.half_grad_sq / dr.bound);
  }
  const double freq = static_cast<double>(separable) / draws.size();
  res.summary["k"] = k;
  res.summary["separable_frequency"] = freq;
  res.checks.push_back(make_check("separable at init with frequency >= 1 - delta", freq >= 1.0 - sep_delta,
                                  fmt(freq) + " over " + std::to_string(draws.size()) + " draws at k=" +
                                      std::to_string(k)));
  res.checks.push_back(make_check("gradient lower bound", used == wanted && violations == 0,
                                  std::to_string(violations) + " violations on " + std::to_string(used) +
                                      " configurations, min ratio " + fmt(min_ratio)));

  // Event probability over a grid of (a, eps, R).
  Table& ev = res.tables["event_probability"];
  ev.columns = {"R", "a", "eps", "p_hat", "se", "exact", "bound", "pass"};
  bool ev_ok = true;
  std::size_t cell = 0;
  const std::size_t samples = cfg.value("event_samples", std::size_t{400000});
  for (double R : grid<double>(cfg, "event_radius_grid")) {
    for (double eps : {R / 6.0, R / 12.0, R / 60.0}) {
      for (double a : {-R, -0.5 * R, 0.0, 0.5 * R - eps, R - eps}) {
        const EventProbability e = event_probability_mc(a, eps, R, samples, derive_seed(seeds.front(), 20, cell++));
        ev_ok = ev_ok && e.pass;
        ev.add({fmt(R), fmt(a), fmt(eps), fmt(e.p_hat), fmt(e.standard_error), fmt(e.exact), fmt(e.bound),
                e.pass ? "1" : "0"});
      }
    }
  }
  res.checks.push_back(make_check("event probability >= eps/(512 R^4)", ev_ok, std::to_string(cell) + " cells"));

  // PL proposition sampled in the hidden neighborhood at the smallest
  // theorem-scale instance.
  const std::size_t pl_n = cfg.value("pl_n", std::size_t{4});
  const double pl_delta = cfg.at("init").value("delta", 0.5);
  const TheoreticalConstants tc = theoretical_constants(spec, pl_n, pl_delta);
  const std::size_t pl_k = static_cast<std::size_t>(tc.k_used);
  const double pl_bound = pl_proposition_bound(spec, pl_n, pl_delta, tc.sigma_h_min);
  Table& plt = res.tables["pl_proposition"];
  plt.columns = {"seed", "separable", "drawn", "qualified", "min_half_grad_sq", "bound", "violations"};
  bool pl_ok = true;
  std::size_t pl_tested = 0;
  const std::size_t pl_seeds = std::min<std::size_t>(cfg.value("pl_seeds", std::size_t{3}), seeds.size());
  for (std::size_t i = 0; i < pl_seeds; ++i) {
    const Dataset d = sample_dataset(spec, dist, pl_n, derive_seed(seeds[i], 30));
    InitConfig ic;
    ic.k = pl_k;
    ic.seed = derive_seed(seeds[i], 31);
    ic.sigma_h = tc.sigma_h_min;
    ic.sigma_o = tc.sigma_o_max;
    const Params theta0 = sample_init(ic);
    const bool sep = check_separability(theta0, d, spec.support_radius).separable;
    const PLSample s = sample_pl_points(theta0, d, tc.delta, tc.sigma_o_max, pl_bound,
                                        cfg.value("pl_points", std::size_t{1000}), derive_seed(seeds[i], 32), kind);
    // The proposition is stated on the high-probability event of separable inits.
    if (sep) {
      ++pl_tested;
      pl_ok = pl_ok && s.violations == 0;
    }
    plt.add({std::to_string(seeds[i]), sep ? "1" : "0", std::to_string(s.drawn), std::to_string(s.qualified),
             fmt(s.min_half_grad_sq), fmt(s.bound), std::to_string(s.violations)});
  }
  res.summary["pl_k"] = pl_k;
  res.summary["pl_sigma_h"] = tc.sigma_h_min;
  res.checks.push_back(make_check("PL proposition on sampled neighborhood points", pl_ok && pl_tested > 0,
                                  std::to_string(pl_tested) + " separable inits tested"));

  res.summary["runtime_s"] = seconds_since(start);
  RunRecord rec;
  rec.config_hash = hash;
  rec.seed = seeds.front();
  rec.scalars["separable_frequency"] = freq;
  rec.scalars["gradient_bound_violations"] = static_cast<double>(violations);
  rec.scalars["k"] = static_cast<double>(k);
  rec.artifacts["separability"] = "separability.csv";
  rec.artifacts["event_probability"] = "event_probability.csv";
  res.records.push_back(rec);
  return res;
}

// --------------------------------------------------------------- dispatch

ExperimentResult run_experiment(const Config& cfg) {
  const std::string kind = cfg.at("kind").get<std::string>();
  if (kind == "example1") return run_example1(cfg);
  if (kind == "optimize" || kind == "implicit-bias") return run_train(cfg);
  if (kind == "region-sweep") return run_region_sweep(cfg);
  if (kind == "dormant-census") return run_dormant_census(cfg);
  if (kind == "generalization") return run_generalization(cfg);
  if (kind == "pl-diagnostics") return run_pl(cfg);
  if (kind == "separability-mc") return run_separability_mc(cfg);
  throw std::invalid_argument("unknown experiment kind: " + kind);
}

void write_result(const ExperimentResult& res, const std::string& dir, const std::string& format) {
  namespace fs = std::filesystem;
  if (format != "csv" && format != "json") throw std::invalid_argument("format must be csv or json");
  fs::create_directories(dir);
  auto open = [&](const fs::path& rel) {
    const fs::path p = fs::path(dir) / rel;
    fs::create_directories(p.parent_path());
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
  };

  ojson summary;
  summary["kind"] = res.kind;
  summary["config_hash"] = config_hash(res.config);
  summary["config"] = ojson::parse(canonical(res.config));
  summary["pass"] = res.pass();
  summary["checks"] = ojson::array();
  for (const auto& c : res.checks) summary["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  summary["summary"] = res.summary;
  open("summary.json") << summary.dump(2) << '\n';

  if (format == "json") {
    ojson recs = ojson::array();
    for (const auto& r : res.records) recs.push_back(to_json(r));
    open("records.json") << recs.dump(2) << '\n';
  } else {
    std::set<std::string> scalar_keys, label_keys, artifact_keys;
    for (const auto& r : res.records) {
      for (const auto& [k, v] : r.scalars) scalar_keys.insert(k);
      for (const auto& [k, v] : r.labels) label_keys.insert(k);
      for (const auto& [k, v] : r.artifacts) artifact_keys.insert(k);
    }
    Table t;
    t.columns = {"config_hash", "seed"};
    t.columns.insert(t.columns.end(), label_keys.begin(), label_keys.end());
    t.columns.insert(t.columns.end(), scalar_keys.begin(), scalar_keys.end());
    for (const auto& k : artifact_keys) t.columns.push_back("artifact_" + k);
    for (const auto& r : res.records) {
      std::vector<std::string> row{r.config_hash, std::to_string(r.seed)};
      for (const auto& k : label_keys) row.push_back(r.labels.count(k) ? r.labels.at(k) : "");
      for (const auto& k : scalar_keys) row.push_back(r.scalars.count(k) ? fmt(r.scalars.at(k)) : "");
      for (const auto& k : artifact_keys) row.push_back(r.artifacts.count(k) ? r.artifacts.at(k) : "");
      t.add(std::move(row));
    }
    auto os = open("records.csv");
    t.write_csv(os);
  }
  for (const auto& [name, table] : res.tables) {
    auto os = open(name + ".csv");
    table.write_csv(os);
  }
  for (const auto& [path, content] : res.artifacts) open(path) << content.dump() << '\n';
}

}  // namespace relugf
