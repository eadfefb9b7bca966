#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "common.hpp"

using namespace gridtopo;
using testutil::fixture;
using testutil::load;

TEST(ScaleRx, DoublesResistanceOnly) {
  const auto net = load("ieee123_analog.json");
  const auto scaled = scale_rx(net, 2.0);
  ASSERT_EQ(scaled.line_count(), net.line_count());
  for (std::size_t l = 0; l < net.line_count(); ++l) {
    const auto& a = net.lines()[l].series_impedance;
    const auto& b = scaled.lines()[l].series_impedance;
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        EXPECT_EQ(b(r, c).real(), 2.0 * a(r, c).real());
        EXPECT_EQ(b(r, c).imag(), a(r, c).imag());
      }
  }
  EXPECT_THROW(scale_rx(net, 0.0), ConfigError);
}

TEST(ScaleRx, PowerFlowStillConverges) {
  for (const char* f : {"toy4.json", "small4sw.json", "small6sw.json", "ieee123_analog.json", "ieee123_loop1.json",
                        "ieee123_loop2.json", "large1282_analog.json"})
    for (double k : {1.5, 2.0}) {
      const auto net = scale_rx(load(f), k);
      const auto sol = solve(net, net.default_switches(), nominal_injections(net));
      EXPECT_TRUE(sol.converged) << f << " x" << k;
    }
}

TEST(Config, VariantsInheritDefaults) {
  const auto j = nlohmann::json::parse(R"({
    "feeder": "feeders/toy4.json", "truth": "10", "repetitions": 3, "seed": 9,
    "samples": 50, "meter_sigma": 0.02,
    "variants": [{"iterations": 2}, {"iterations": 4, "rx_scale": 1.5, "mode": "naive"}]})");
  const auto cfg = experiment_from_json(j, "/base");
  EXPECT_EQ(cfg.feeder, "/base/feeders/toy4.json");
  ASSERT_EQ(cfg.variants.size(), 2u);
  EXPECT_EQ(cfg.variants[0].samples, 50u);
  EXPECT_EQ(cfg.variants[1].samples, 50u);
  EXPECT_EQ(cfg.variants[0].iterations, 2u);
  EXPECT_EQ(cfg.variants[1].meter_sigma, 0.02);
  EXPECT_EQ(cfg.variants[1].rx_scale, 1.5);
  EXPECT_EQ(cfg.variants[1].mode, LikelihoodMode::naive);
  EXPECT_EQ(cfg.variants[0].mode, LikelihoodMode::robust);
  EXPECT_EQ(cfg.truth.fixed->str(), "10");
}

TEST(Config, Rejections) {
  using nlohmann::json;
  EXPECT_THROW(experiment_from_json(json::parse(R"({"truth": "10"})")), ConfigError);
  EXPECT_THROW(experiment_from_json(json::parse(R"({"feeder": "x.json", "truth": 5})")), ConfigError);
  EXPECT_THROW(experiment_from_json(json::parse(R"({"feeder": "x.json", "truth": "10", "repetitions": 0})")),
               ConfigError);
  EXPECT_THROW(experiment_from_json(json::parse(R"({"feeder": "x.json", "truth": "10", "meter_ratio": 2})")),
               ConfigError);
  EXPECT_THROW(experiment_from_json(json::parse(R"({"feeder": "x.json", "truth": "10", "samples": "many"})")),
               ConfigError);
  EXPECT_THROW(load_experiment("/nonexistent/experiment.json"), ConfigError);
}

TEST(Truth, RandomOpenCount) {
  TruthSpec t;
  t.random_open = 3;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto b = t.generate(10, s);
    std::size_t open = 0;
    for (std::size_t i = 0; i < 10; ++i) open += !b.closed(i);
    EXPECT_EQ(open, 3u);
    EXPECT_EQ(b, t.generate(10, s));
  }
  EXPECT_THROW(t.generate(2, 0), ConfigError);
}

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.feeder = fixture("small6sw.json");
  cfg.truth.fixed = SwitchVector::parse("111111");
  cfg.repetitions = 1;
  cfg.seed = 3;
  VariantConfig v;
  v.samples = 200;
  v.iterations = 3;
  v.meter_sigma = 0.0;
  v.forecast_sigma = 0.0;
  cfg.variants = {v};
  return cfg;
}

}  // namespace

TEST(Experiment, NoiselessAllClosedIsPerfect) {
  const auto rep = run_experiment(small_config());
  ASSERT_EQ(rep.variants.size(), 1u);
  EXPECT_EQ(rep.variants[0].fail_count, 0u);
  EXPECT_DOUBLE_EQ(rep.variants[0].rho2, 1.0);
  EXPECT_DOUBLE_EQ(rep.variants[0].rho1, 1.0);
  EXPECT_EQ(rep.variants[0].trace.size(), 4u);
  EXPECT_EQ(rep.variants[0].time_s, 0.0);  // timing is opt-in
}

TEST(Experiment, CsvIdenticalAcrossRunsAndWorkers) {
  auto cfg = small_config();
  cfg.truth.fixed = SwitchVector::parse("101101");
  cfg.repetitions = 4;
  cfg.variants[0].meter_sigma = 0.01;
  cfg.variants[0].forecast_sigma = 0.1;
  cfg.variants.push_back(cfg.variants[0]);
  cfg.variants[1].iterations = 1;
  auto render = [](const ExperimentReport& r) {
    std::ostringstream a;
    write_results_csv(r, a);
    write_trace_csv(r, a);
    write_repetitions_csv(r, a);
    return a.str();
  };
  const auto first = render(run_experiment(cfg));
  EXPECT_EQ(first, render(run_experiment(cfg)));
  cfg.workers = 3;
  EXPECT_EQ(first, render(run_experiment(cfg)));
  EXPECT_EQ(first.rfind("samples,iterations,meter_sigma,forecast_sigma,meter_ratio,rx_scale,time_s,rho1,rho2,fail_count\n", 0), 0u);
}

TEST(Experiment, WritesReportFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "gridtopo_harness_test";
  std::filesystem::remove_all(dir);
  write_report(run_experiment(small_config()), dir.string());
  for (const char* f : {"results.csv", "trace.csv", "repetitions.csv"}) EXPECT_TRUE(std::filesystem::exists(dir / f));
  std::filesystem::remove_all(dir);
}

TEST(Seeds, DistinctStreams) {
  EXPECT_EQ(repetition_seed(100, 5), 105u);
  EXPECT_NE(inference_seed(1), inference_seed(2));
  EXPECT_NE(inference_seed(7), 7u);
}
