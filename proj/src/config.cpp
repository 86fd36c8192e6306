#include "relugf/config.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace relugf {

namespace {

Config seed_list(int count) {
  Config s = Config::array();
  for (int i = 0; i < count; ++i) s.push_back(i);
  return s;
}

Config base_defaults() {
  return Config{
      {"loss", "exponential"},
      {"kink_value", 0.0},
      {"seeds", seed_list(10)},
      {"threads", 0},
      {"out", "out"},
      {"kkt_tau", 1e-3},
      {"kkt_threshold", 1e-3},
      {"init", {{"sigma_h", 1.0}, {"sigma_o", "practical"}, {"law", "gaussian"}, {"delta", 0.5}}},
      {"flow", Config::object()},
  };
}

Config kind_defaults(const std::string& kind) {
  Config c = base_defaults();
  c["kind"] = kind;
  if (kind == "example1") {
    c["seeds"] = Config::array({0});
    c["flow"] = {{"max_tau", 50.0}};
  } else if (kind == "optimize" || kind == "implicit-bias") {
    if (kind == "implicit-bias") c["flow"] = {{"max_steps", 20000}, {"max_halvings", 1e300}};
    c["r"] = 1;
    c["n"] = 20;
    c["k"] = 50;
    c["distribution"] = {{"kind", "uniform"}, {"radius", 1.0}};
  } else if (kind == "region-sweep") {
    c["r_grid"] = {1, 2, 3};
    c["k_grid"] = {"4r", "20r", 200};
    c["n_grid"] = {20, 100};
    c["distribution"] = {{"kind", "uniform"}, {"radius", 1.0}};
    c["flow"] = {{"max_steps", 20000}, {"max_halvings", 1e300}};
  } else if (kind == "dormant-census") {
    c["draws"] = 10000;
    c["k_grid"] = {4, 8, 16, 32};
    c["r_grid"] = {4, 8};
    c["heavy_runs"] = 5;
    c["n"] = 100;  // training set of the dormant-heavy runs
    c["seeds"] = seed_list(1);
    c["flow"] = {{"max_tau", 200.0}, {"stop_at_plateau", false}};
  } else if (kind == "generalization") {
    c["r"] = 1;
    c["k"] = 50;
    c["n_grid"] = {25, 50, 100, 200};
    c["seeds"] = seed_list(20);
    c["mc_samples"] = 1000000;
    c["flow"] = {{"max_steps", 20000}, {"max_halvings", 1e300}};
    c["distribution"] = {{"kind", "uniform"}, {"radius", 1.0}};
  } else if (kind == "pl-diagnostics") {
    c["r_grid"] = {1, 2};
    c["n_grid"] = {20, 50};
    c["sigma_h_grid"] = {10.0, 100.0};
    c["width_factor"] = 30.0;  // k = ceil(width_factor / rho)
    c["init"]["sigma_o"] = "theorem";
    c["seeds"] = seed_list(20);
    c["distribution"] = {{"kind", "uniform"}, {"radius", 1.0}};
    c["flow"] = {{"stop_at_half_inv_n", true}, {"max_tau", 1e4}};
  } else if (kind == "separability-mc") {
    c["configurations"] = 50;
    c["r"] = 1;
    c["n"] = 10;
    c["k"] = "theorem";  // k_min at separability_delta
    c["separability_delta"] = 0.2;
    c["event_samples"] = 400000;
    c["event_radius_grid"] = {1.0, 2.0};
    c["pl_n"] = 4;
    c["pl_seeds"] = 3;
    c["pl_points"] = 1000;
    c["seeds"] = seed_list(200);
    c["distribution"] = {{"kind", "uniform"}, {"radius", 1.0}};
  } else {
    throw std::invalid_argument("unknown experiment kind: " + kind);
  }
  return c;
}

void validate(const Config& c) {
  for (auto it = c.begin(); it != c.end(); ++it) {
    const std::string& key = it.key();
    const bool is_grid = key.size() > 5 && key.compare(key.size() - 5, 5, "_grid") == 0;
    if ((is_grid || key == "seeds") && (!it->is_array() || it->empty())) {
      throw std::invalid_argument("config: " + key + " must be a nonempty list");
    }
  }
  std::set<std::uint64_t> seen;
  for (const auto& s : c.at("seeds")) {
    if (!seen.insert(s.get<std::uint64_t>()).second) {
      throw std::invalid_argument("config: seeds must be distinct");
    }
  }
}

}  // namespace

Config make_config(const std::string& kind, const Config& user) {
  Config c = kind_defaults(kind);
  c.merge_patch(user);
  c["kind"] = kind;
  validate(c);
  return c;
}

void set_override(Config& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override must look like key=value: " + assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Config value = Config::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  Config* node = &cfg;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
  validate(cfg);
}

std::string canonical(const Config& cfg) { return cfg.dump(); }

std::string config_hash(const Config& cfg) {
  // Where and on how many threads a run executes does not change its results.
  Config c = cfg;
  if (c.is_object()) {
    c.erase("threads");
    c.erase("out");
  }
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : canonical(c)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

FlowConfig flow_config_from(const Config& j) {
  FlowConfig f;
  if (j.is_null()) return f;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  if (j.contains("integrator")) f.integrator = integrator_from_string(j.at("integrator").get<std::string>());
  get("rel_tol", f.rel_tol);
  get("abs_tol", f.abs_tol);
  get("stiff_rel_tol", f.stiff_rel_tol);
  get("stiff_abs_tol", f.stiff_abs_tol);
  get("stiff_margin_tol", f.stiff_margin_tol);
  get("rk4_step", f.rk4_step);
  get("max_time", f.max_time);
  get("max_tau", f.max_tau);
  get("max_steps", f.max_steps);
  get("loss_floor", f.loss_floor);
  get("max_halvings", f.max_halvings);
  get("stop_at_half_inv_n", f.stop_at_half_inv_n);
  get("stop_at_plateau", f.stop_at_plateau);
  get("direction_window", f.direction_window);
  get("plateau_angle", f.plateau_angle);
  get("plateau_growth", f.plateau_growth);
  get("plateau_needs_separation", f.plateau_needs_separation);
  get("snap_dtau", f.snap_dtau);
  get("snap_dlog_loss", f.snap_dlog_loss);
  get("snap_dlog_norm", f.snap_dlog_norm);
  get("keep_params", f.keep_params);
  get("locate_kinks", f.locate_kinks);
  get("event_tol", f.event_tol);
  get("zeno_limit", f.zeno_limit);
  get("max_stored_events", f.max_stored_events);
  return f;
}

nlohmann::ordered_json to_json(const FlowConfig& f) {
  return nlohmann::ordered_json{
      {"integrator", to_string(f.integrator)},
      {"rel_tol", f.rel_tol},
      {"abs_tol", f.abs_tol},
      {"stiff_rel_tol", f.stiff_rel_tol},
      {"stiff_abs_tol", f.stiff_abs_tol},
      {"stiff_margin_tol", f.stiff_margin_tol},
      {"max_time", f.max_time},
      {"max_tau", f.max_tau},
      {"max_steps", f.max_steps},
      {"loss_floor", f.loss_floor},
      {"max_halvings", f.max_halvings},
      {"stop_at_plateau", f.stop_at_plateau},
      {"plateau_angle", f.plateau_angle},
      {"plateau_growth", f.plateau_growth},
      {"direction_window", f.direction_window},
      {"kink_value", f.policy.kink_value}};
}

nlohmann::ordered_json to_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  j["scalars"] = r.scalars;
  j["labels"] = r.labels;
  j["artifacts"] = r.artifacts;
  return j;
}

}  // namespace relugf
