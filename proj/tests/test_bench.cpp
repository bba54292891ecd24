#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "qdoor/attacks.hpp"
#include "qdoor/bench.hpp"

using namespace qdoor;

namespace {

// With all parameters zero the 8-qubit angle model measures qubit 0 after a
// single RY(x0), so class 1 has probability sin^2(x0/2).
Model oracle_model() {
  Model m = build_mnist_model(2);
  m.params.setZero();
  return m;
}

Dataset oracle_dataset(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, std::numbers::pi);
  Dataset d;
  d.n_classes = 2;
  d.features.resize(n, 8);
  for (int i = 0; i < n; ++i) {
    const int y = i % 3 == 0 ? 1 : 0;
    for (int j = 1; j < 8; ++j) d.features(i, j) = u(rng);
    d.features(i, 0) = y ? 2.6 + 0.01 * (i % 7) : 0.2 + 0.01 * (i % 5);
    d.labels.push_back(y);
  }
  return d;
}

Model random_iris(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.5);
  Model m = build_iris2_model();
  for (int i = 0; i < m.n_params(); ++i) m.params(i) = n(rng);
  return m;
}

}  // namespace

TEST(evaluate, oracle_model_is_perfect) {
  const Model m = oracle_model();
  const Dataset d = oracle_dataset(30, 1);
  EvalConfig cfg;
  EXPECT_EQ(evaluate_cda(Target{&m, nullptr}, d, cfg), 1.0);
  EXPECT_EQ(evaluate_cda(Target{&m, nullptr}, d, cfg, 1), 1.0);
  cfg.shots = 200;
  EXPECT_EQ(evaluate_cda(Target{&m, nullptr}, d, cfg), 1.0);
}

TEST(evaluate, trigger_forcing_target_gives_full_asr) {
  const Model m = oracle_model();
  const Dataset d = oracle_dataset(30, 2);
  EXPECT_EQ(evaluate_asr(Target{&m, nullptr}, d, TriggerSpec{0, std::numbers::pi}, 1, EvalConfig{}), 1.0);
  EXPECT_EQ(evaluate_asr(Target{&m, nullptr}, d, TriggerSpec{0, 0.0}, 1, EvalConfig{}), 0.0);
}

TEST(evaluate, proportions_are_counts_over_n) {
  const Model m = random_iris(3);
  const Prepared p = prepare_iris2(20, 0.25, 0.5, 3);
  EvalConfig cfg;
  cfg.noise = NoiseModel::preset("mel");
  cfg.trajectories = 4;
  const double cda = evaluate_cda(Target{&m, nullptr}, p.test, cfg);
  const double n = p.test.size();
  EXPECT_NEAR(cda * n, std::round(cda * n), 1e-9);
  EXPECT_GE(cda, 0.0);
  EXPECT_LE(cda, 1.0);
}

TEST(evaluate, repeatable_with_fixed_seed) {
  const Model m = random_iris(4);
  const Prepared p = prepare_iris2(20, 0.25, 0.5, 4);
  EvalConfig cfg;
  cfg.noise = NoiseModel::preset("cam");
  cfg.trajectories = 3;
  cfg.shots = 50;
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(eval_class_probs(Target{&m, nullptr}, p.test.sample(i), cfg, 9),
              eval_class_probs(Target{&m, nullptr}, p.test.sample(i), cfg, 9));
  }
  EXPECT_EQ(evaluate_cda(Target{&m, nullptr}, p.test, cfg), evaluate_cda(Target{&m, nullptr}, p.test, cfg));
}

TEST(evaluate_scheme, rows_and_shared_cost_per_epsilon) {
  const Model m = random_iris(5);
  const Prepared p = prepare_iris2(10, 0.25, 0.5, 5);
  EvalConfig cfg;
  cfg.eps_list = {1e-1, 1e-2};
  cfg.n_syn = 3;
  const auto rows = evaluate_scheme("qdoor", m, p.test, cfg, default_trigger(4), 0);
  ASSERT_GE(rows.size(), 3u);
  EXPECT_EQ(rows[0].stage, "uncompiled");
  EXPECT_FALSE(rows[0].epsilon.has_value());
  std::map<double, std::set<int>> cost;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].stage, "eps");
    ASSERT_TRUE(rows[i].asr.has_value());
    cost[*rows[i].epsilon].insert(rows[i].n_2qg);
  }
  EXPECT_EQ(cost.size(), 2u);
  for (const auto& [eps, s] : cost) EXPECT_EQ(s.size(), 1u) << eps;
  EXPECT_LE(*cost[1e-1].begin(), *cost[1e-2].begin());
  const auto clean = evaluate_scheme("clean", m, p.test, cfg, std::nullopt, 0);
  for (const auto& r : clean) EXPECT_FALSE(r.asr.has_value());
}

TEST(evaluate_scheme, qtrojan_asr_at_least_cda) {
  const Model m = oracle_model();
  const Dataset d = oracle_dataset(30, 6);
  RealVector t = d.sample(0);  // class 1 sample
  const Model hij = qtrojan_inject(m, t);
  EvalConfig cfg;
  cfg.eps_list.clear();
  const auto rows = evaluate_scheme("qtrojan", hij, d, cfg, default_trigger(8), 1);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(*rows[0].asr, 1.0);
  EXPECT_GE(*rows[0].asr, rows[0].cda);
  EXPECT_NEAR(rows[0].cda, 10.0 / 30.0, 1e-15);
}

TEST(report, csv_round_trip_and_summary) {
  Report r;
  ReportRow a;
  a.scheme = "qdoor";
  a.stage = "uncompiled";
  a.cda = 0.95;
  a.asr = 0.1;
  a.n_2qg = 12;
  a.depth = 30;
  a.noise = "ideal";
  ReportRow b = a;
  b.stage = "eps";
  b.epsilon = 1e-3;
  b.candidate_id = 0;
  b.asr = 0.9;
  b.target_acc = 0.5;
  b.other_acc = 1.0;
  ReportRow c = b;
  c.candidate_id = 1;
  c.asr = 0.7;
  ReportRow e = b;
  e.candidate_id = 2;
  e.asr = 0.0;
  e.status = "over_budget";
  ReportRow d = a;
  d.scheme = "clean";
  d.asr.reset();
  r.rows = {a, b, c, d, e};
  std::stringstream ss;
  r.write_csv(ss);
  const std::string text = ss.str();
  const Report back = read_report_csv(ss);
  ASSERT_EQ(back.rows.size(), 5u);
  EXPECT_EQ(back.rows[1].epsilon, 1e-3);
  EXPECT_EQ(back.rows[4].status, "over_budget");
  EXPECT_FALSE(back.rows[3].asr.has_value());
  std::stringstream again;
  back.write_csv(again);
  EXPECT_EQ(again.str(), text);

  const auto j = nlohmann::json::parse(r.summary_json());
  EXPECT_EQ(j["failures"].get<int>(), 1);
  bool found = false;
  for (const auto& g : j["groups"]) {
    if (g["scheme"] == "qdoor" && g["stage"] == "eps") {
      found = true;
      EXPECT_DOUBLE_EQ(g["asr"]["mean"].get<double>(), 0.8);
      EXPECT_DOUBLE_EQ(g["asr"]["min"].get<double>(), 0.7);
      EXPECT_DOUBLE_EQ(g["asr"]["max"].get<double>(), 0.9);
    }
    if (g["scheme"] == "clean") EXPECT_FALSE(g.contains("asr"));
  }
  EXPECT_TRUE(found);
}

TEST(sweep, csv_round_trip_and_plot_series) {
  std::vector<SweepPoint> pts(2);
  pts[0] = {1e-2, 0.5, 0.9, 0.25, 0.75, 4, 10};
  pts[1] = {1e-3, 0.125, 0.95, 0.0, 0.25, 2, 14};
  std::stringstream ss;
  write_sweep_csv(ss, pts);
  const auto back = read_sweep_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].epsilon, 1e-3);
  EXPECT_EQ(back[0].mean_asr, 0.5);
  EXPECT_EQ(back[1].n_2qg, 14);
  const auto dir = (std::filesystem::temp_directory_path() / "qdoor_test_plot").string();
  const auto files = write_plot_series(dir, pts);
  ASSERT_FALSE(files.empty());
  for (const auto& f : files) EXPECT_TRUE(std::filesystem::exists(f)) << f;
}

TEST(eval_config, validation) {
  EvalConfig c;
  c.schemes = {"clean", "bogus"};
  EXPECT_THROW(c.validate(), ConfigError);
  c = EvalConfig{};
  c.eps_list = {1.5};
  EXPECT_THROW(c.validate(), ConfigError);
  c = EvalConfig{};
  c.trajectories = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}
