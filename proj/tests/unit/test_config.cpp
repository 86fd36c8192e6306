#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "relugf/config.hpp"
#include "relugf/experiments.hpp"

using namespace relugf;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, DefaultsAndHash) {
  for (const std::string& kind : experiment_kinds()) {
    const Config a = make_config(kind), b = make_config(kind);
    EXPECT_EQ(a.at("kind"), kind);
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
  }
  EXPECT_NE(config_hash(make_config("example1")), config_hash(make_config("region-sweep")));
  EXPECT_THROW(make_config("nope"), std::invalid_argument);
}

TEST(Config, Validation) {
  EXPECT_THROW(make_config("region-sweep", {{"seeds", Config::array()}}), std::invalid_argument);
  EXPECT_THROW(make_config("region-sweep", {{"seeds", {1, 1}}}), std::invalid_argument);
  EXPECT_THROW(make_config("region-sweep", {{"r_grid", Config::array()}}), std::invalid_argument);
}

TEST(Config, Overrides) {
  Config c = make_config("region-sweep");
  set_override(c, "flow.rel_tol=1e-7");
  set_override(c, "loss=logistic");
  set_override(c, "r_grid=[1,2]");
  EXPECT_EQ(c["flow"]["rel_tol"].get<double>(), 1e-7);
  EXPECT_EQ(c["loss"], "logistic");
  EXPECT_EQ(grid<int>(c, "r_grid"), (std::vector<int>{1, 2}));
  EXPECT_EQ(flow_config_from(c["flow"]).rel_tol, 1e-7);
  EXPECT_THROW(set_override(c, "no-equals"), std::invalid_argument);
  // Key order does not change the hash.
  Config x = Config::parse(R"({"a":1,"b":{"c":2,"d":3}})"), y = Config::parse(R"({"b":{"d":3,"c":2},"a":1})");
  EXPECT_EQ(config_hash(x), config_hash(y));
  // Execution-only keys are not part of the hash.
  Config t = make_config("region-sweep");
  const std::string base = config_hash(t);
  t["threads"] = 7;
  t["out"] = "elsewhere";
  EXPECT_EQ(config_hash(t), base);
}

TEST(Config, DeriveSeedStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 20; ++s)
    for (std::uint64_t stream = 0; stream < 20; ++stream)
      for (std::uint64_t i = 0; i < 5; ++i) seen.insert(derive_seed(s, stream, i));
  EXPECT_EQ(seen.size(), 2000u);
  EXPECT_EQ(derive_seed(3, 1, 2), derive_seed(3, 1, 2));
}

TEST(Config, ParallelMapKeepsOrder) {
  std::vector<int> xs(100);
  for (int i = 0; i < 100; ++i) xs[i] = i;
  const auto ys = parallel_map(xs, [](int x) { return x * x; }, 4);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(ys[i], i * i);
  EXPECT_THROW(parallel_map(xs, [](int x) -> int { if (x == 50) throw std::runtime_error("x"); return x; }, 3),
               std::runtime_error);
}

TEST(Format, ShortestRoundTrip) {
  EXPECT_EQ(fmt(0.1), "0.1");
  EXPECT_EQ(fmt(1e300), "1e+300");
  EXPECT_EQ(fmt(std::nan("")), "nan");
  EXPECT_EQ(fmt(-INFINITY), "-inf");
  for (double x : {1.0 / 3.0, 2.718281828459045, 1e-17, 123456789.125}) EXPECT_EQ(std::stod(fmt(x)), x);
}

TEST(TestError, Examples) {
  const TeacherSpec t = make_fr_teacher(1);
  const Distribution u = Distribution::uniform(1.0);
  EXPECT_NEAR(test_error_exact(t.teacher, t, u), 0.0, 1e-12);
  EXPECT_NEAR(test_error_exact(Params::zeros(1), t, u), 0.5, 1e-12);
  EXPECT_NEAR(test_error_exact(scale(t.teacher, 3.0), t, u), 0.0, 1e-12);
  // -relu(-x): wrong on (-1, 0), right on (0, 1) where it is zero.
  EXPECT_NEAR(test_error_exact(Params({-1}, {0}, {-1}), t, u), 0.5, 1e-12);
  // relu(x - 0.5): +1 only on (0.5, 1), where the teacher says -1.
  EXPECT_NEAR(test_error_exact(Params({1}, {-0.5}, {1}), t, u), 0.5 + 0.25, 1e-12);
}

TEST(TestError, ExactMatchesDenseGrid) {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> g(0.0, 1.0);
  const TeacherSpec t = make_fr_teacher(3);
  const Distribution u = Distribution::uniform(1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> w(6), b(6), v(6);
    for (int j = 0; j < 6; ++j) {
      w[j] = g(rng);
      b[j] = g(rng);
      v[j] = g(rng);
    }
    const Params p(w, b, v);
    const int m = 200000;
    std::size_t wrong = 0;
    for (int i = 0; i < m; ++i) {
      const double x = -1.0 + 2.0 * (i + 0.5) / m;
      wrong += label_of(evaluate(p, x)) != fr_label(3, x);
    }
    const double exact = test_error_exact(p, t, u);
    EXPECT_NEAR(exact, static_cast<double>(wrong) / m, 5e-5);
    const double mc = test_error_mc(p, t, u, 100000, trial);
    EXPECT_NEAR(mc, exact, 5.0 * std::sqrt(std::max(exact * (1 - exact), 1e-6) / 100000));
  }
}

TEST(TrainToKKT, Example1Certifies) {
  const Dataset d = make_dataset({-4.0, 4.0}, {1, 1});
  FlowConfig f;
  f.max_tau = 1e4;
  f.max_halvings = 1e300;
  const KKTRun run = train_to_kkt(Params({0, 0}, {1, 0}, {1, 0}), d, LossKind::kExponential, f, {});
  EXPECT_EQ(run.outcome, "certified");
  EXPECT_TRUE(run.separated);
  EXPECT_LE(run.residual, 1e-3);
  EXPECT_GE(run.checks, 1u);
}

TEST(TrainToKKT, NotSeparated) {
  // A single ReLU cannot fit +1, -1, +1.
  const Dataset d = make_dataset({-0.5, 0.0, 0.5}, {1, -1, 1});
  FlowConfig f;
  f.max_tau = 50.0;
  const KKTRun run = train_to_kkt(Params({0.3}, {0.1}, {0.2}), d, LossKind::kExponential, f, {});
  EXPECT_FALSE(run.separated);
  EXPECT_EQ(run.outcome, "not-separated");
}

TEST(Results, ByteIdenticalAcrossRuns) {
  namespace fs = std::filesystem;
  const Config cfg = make_config("example1");
  const fs::path base = fs::temp_directory_path() / "relugf_repro";
  fs::remove_all(base);
  write_result(run_example1(cfg), (base / "a").string(), "csv");
  write_result(run_example1(cfg), (base / "b").string(), "csv");
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(base / "a")) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    const fs::path other = base / "b" / fs::relative(e.path(), base / "a");
    EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path();
    ++compared;
  }
  EXPECT_GE(compared, 1u);
  fs::remove_all(base);
}
