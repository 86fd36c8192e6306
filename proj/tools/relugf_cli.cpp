// Command-line front end for the experiment harness.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relugf/config.hpp"
#include "relugf/data.hpp"
#include "relugf/experiments.hpp"
#include "relugf/kkt.hpp"
#include "relugf/regions.hpp"

using namespace relugf;
using ojson = nlohmann::ordered_json;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::string format = "csv";
  int threads = -1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "JSON config merged over the defaults")->check(CLI::ExistingFile);
  app->add_option("--set", c.sets, "override, e.g. --set flow.rel_tol=1e-10 (repeatable)");
  app->add_option("--seed", c.seeds, "run only these seeds");
  app->add_option("--out", c.out, "output directory (default <out>/<kind>)");
  app->add_option("--format", c.format, "records format")->check(CLI::IsMember({"csv", "json"}));
  app->add_option("--threads", c.threads, "worker threads (0: all cores)");
}

Config build_config(const std::string& kind, const Common& c) {
  Config user = Config::object();
  if (!c.config_file.empty()) {
    std::ifstream is(c.config_file);
    user = Config::parse(is);
  }
  Config cfg = make_config(kind, user);
  for (const auto& s : c.sets) set_override(cfg, s);
  if (!c.seeds.empty()) set_override(cfg, "seeds=" + Config(c.seeds).dump());
  if (c.threads >= 0) cfg["threads"] = c.threads;
  return cfg;
}

int run_kind(const std::string& kind, const Common& c) {
  const Config cfg = build_config(kind, c);
  const std::string dir = c.out.empty() ? cfg.value("out", std::string("out")) + "/" + kind : c.out;
  const ExperimentResult res = run_experiment(cfg);
  write_result(res, dir, c.format);
  for (const auto& ch : res.checks) {
    std::printf("%s  %s%s%s\n", ch.pass ? "PASS" : "FAIL", ch.name.c_str(), ch.detail.empty() ? "" : ": ",
                ch.detail.c_str());
  }
  std::printf("%s -> %s (config %s)\n", kind.c_str(), dir.c_str(), config_hash(cfg).c_str());
  return res.pass() ? 0 : 1;
}

ojson read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return ojson::parse(is);
}

// Accepts a bare Params document or a run artifact (prefers "normalized").
Params params_from(const ojson& j) {
  if (j.contains("normalized")) return j.at("normalized").get<Params>();
  if (j.contains("final")) return j.at("final").get<Params>();
  return j.get<Params>();
}

Dataset dataset_from(const std::string& path) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") {
    std::ifstream is(path);
    return read_csv(is);
  }
  const ojson j = read_json(path);
  return dataset_from_json(j.contains("dataset") ? j.at("dataset") : j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient flow on univariate two-layer ReLU networks"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* kind;
    const char* help;
  };
  const std::vector<Sub> subs{
      {"example1", "example1", "two-point fixture with a known limit direction"},
      {"regions", "region-sweep", "train to approximate KKT points and count linear regions"},
      {"census", "dormant-census", "dormant-neuron census and the width lower bound"},
      {"generalize", "generalization", "test error against sample size"},
      {"pl", "pl-diagnostics", "time to small loss and the measured PL ratio"},
      {"sep-mc", "separability-mc", "separability at init, gradient and event bounds"},
  };
  std::vector<Common> commons(subs.size() + 1);
  std::vector<CLI::App*> apps;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    apps.push_back(app.add_subcommand(subs[i].name, subs[i].help));
    add_common(apps.back(), commons[i]);
  }

  Common& train_common = commons.back();
  std::string train_kind = "implicit-bias";
  CLI::App* train = app.add_subcommand("train", "train one (r, k, n) cell over the seeds");
  add_common(train, train_common);
  train->add_option("--kind", train_kind, "optimize: stop at L <= 1/(2n); implicit-bias: KKT protocol")
      ->check(CLI::IsMember({"optimize", "implicit-bias"}));

  std::string run_file, params_file, data_file;
  double tau = 1e-3, eps = 1e-3, kink_value = 0.0;
  CLI::App* kkt = app.add_subcommand("kkt-check", "KKT certificate of a saved network");
  kkt->add_option("--run", run_file, "run artifact with params and dataset")->check(CLI::ExistingFile);
  kkt->add_option("--params", params_file, "params JSON (or run artifact)")->check(CLI::ExistingFile);
  kkt->add_option("--data", data_file, "dataset JSON or CSV (or run artifact)")->check(CLI::ExistingFile);
  kkt->add_option("--tau", tau, "active-set slack");
  kkt->add_option("--eps", eps, "residual threshold for the exit code");
  kkt->add_option("--kink-value", kink_value, "ReLU derivative at 0 outside the hull");

  CLI11_PARSE(app, argc, argv);

  try {
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (apps[i]->parsed()) return run_kind(subs[i].kind, commons[i]);
    if (train->parsed()) return run_kind(train_kind, train_common);
    if (kkt->parsed()) {
      if (params_file.empty()) params_file = run_file;
      if (data_file.empty()) data_file = run_file;
      if (params_file.empty() || data_file.empty()) {
        std::cerr << "kkt-check needs --run, or --params and --data\n";
        return 2;
      }
      const Dataset d = dataset_from(data_file);
      const Params p = normalize_to_margin_one(params_from(read_json(params_file)), d);
      const KKTCertificate c = certify(p, d, SubgradientPolicy{kink_value}, tau);
      ojson out;
      out["certificate"] = to_json(c);
      out["regions"] = to_json(count_regions(p, region_domain(1.0)));
      std::cout << out.dump(2) << '\n';
      const bool ok = c.is_eps_kkt(eps);
      std::printf("%s  eps-KKT at eps=%g\n", ok ? "PASS" : "FAIL", eps);
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
