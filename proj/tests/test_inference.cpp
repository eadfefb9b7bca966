#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"

using namespace gridtopo;
using testutil::load;

namespace {

// Each switch bit is observed directly; slot P values are observed too.
struct Surrogate {
  std::size_t ns = 0, n = 0;
  std::vector<double> y, sig;
  bool fail = false;

  std::size_t switch_count() const { return ns; }
  std::size_t slot_count() const { return n; }
  const std::vector<double>& target() const { return y; }
  const std::vector<double>& sigma() const { return sig; }
  bool predict(const SwitchVector& b, const InjectionState& s, std::vector<double>& out) const {
    if (fail) return false;
    out.clear();
    for (std::size_t i = 0; i < ns; ++i) out.push_back(b.closed(i) ? 1.0 : 0.0);
    for (std::size_t k = 0; k < n; ++k) out.push_back(s.p[k]);
    return true;
  }
};
static_assert(ForwardModel<Surrogate>);

ProposalParams box_proposal(std::size_t ns, std::size_t n, double loc, double scale) {
  ProposalParams pp;
  pp.p_bino.assign(ns, 0.5);
  pp.location.assign(2 * n, loc);
  pp.scale.assign(2 * n, 0.0);
  for (std::size_t k = 0; k < n; ++k) pp.scale[k] = scale;
  for (std::size_t d = 0; d < 2 * n; ++d) {
    auto [lo, hi] = bounds_from_stats(pp.location[d], pp.scale[d]);
    pp.lower.push_back(lo);
    pp.upper.push_back(hi);
  }
  return pp;
}

Ensemble ensemble_from(const std::vector<double>& w) {
  Ensemble e;
  for (double x : w) {
    Sample s;
    s.b = SwitchVector(1);
    s.norm_weight = x;
    e.samples.push_back(s);
  }
  return e;
}

}  // namespace

TEST(Weights, MatchMultiprecisionSoftmax) {
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<int> len(1, 40);
  std::uniform_real_distribution<double> spread(0.0, 1000.0), u(-1.0, 1.0), coin(0.0, 1.0);
  for (int c = 0; c < 1000; ++c) {
    const double half = c < 20 ? 1000.0 : spread(rng);
    std::vector<double> lw(len(rng));
    for (auto& v : lw) v = coin(rng) < 0.05 ? kNegInf : half * u(rng);
    if (c % 7 == 0) lw[0] = 1000.0, lw.back() = -1000.0;
    if (std::none_of(lw.begin(), lw.end(), [](double v) { return std::isfinite(v); })) lw[0] = 0.0;

    const auto w = normalize_log_weights(lw);
    const auto oracle = testutil::softmax_oracle(lw);
    double sum = 0.0;
    for (std::size_t i = 0; i < lw.size(); ++i) {
      EXPECT_NEAR(w[i], oracle[i], 1e-12);
      sum += w[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Weights, AllInfiniteIsNumericalError) {
  EXPECT_THROW(normalize_log_weights({kNegInf, kNegInf}), NumericalError);
}

TEST(Weights, EssBounds) {
  auto e = ensemble_from({0.25, 0.25, 0.25, 0.25});
  EXPECT_DOUBLE_EQ(effective_sample_size(e), 4.0);
  e = ensemble_from({1.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(effective_sample_size(e), 1.0);
}

TEST(Resample, FrequenciesFollowWeights) {
  const auto e = ensemble_from({0.2, 0.0, 0.8});
  std::mt19937_64 rng(5);
  const auto idx = resample_indices(e, 100000, rng);
  std::array<int, 3> hits{};
  for (auto i : idx) ++hits[i];
  EXPECT_EQ(hits[1], 0);
  EXPECT_NEAR(hits[2] / 1e5, 0.8, 0.01);
  const auto eq = resample_equal_weight(e, 10, rng);
  for (const auto& s : eq) EXPECT_DOUBLE_EQ(s.norm_weight, 0.1);
}

TEST(Proposal, ClampedClosedFrequency) {
  ProposalParams pp = box_proposal(1, 0, 0.0, 0.0);
  pp.p_bino[0] = 0.85;
  std::mt19937_64 rng(17);
  int closed = 0;
  for (const auto& d : draw(pp, 100000, rng)) closed += d.b.closed(0);
  EXPECT_NEAR(closed / 1e5, 0.85, 0.01);
}

TEST(Proposal, DrawsStayInBox) {
  const auto pp = box_proposal(0, 5, 10.0, 2.0);
  std::mt19937_64 rng(3);
  for (const auto& d : draw(pp, 2000, rng))
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_GE(d.s.p[k], 4.0);
      EXPECT_LE(d.s.p[k], 16.0);
      EXPECT_EQ(d.s.q[k], 10.0);  // zero scale: held fixed
    }
}

TEST(Proposal, LogDensityByHand) {
  auto pp = box_proposal(2, 1, 1.0, 0.5);
  pp.p_bino = {0.7, 0.2};
  InjectionState s;
  s.p = {1.5};
  s.q = {123.0};  // fixed dimension, ignored
  const double expected = std::log(0.7) + std::log(0.8) - 0.5 - std::log(0.5) - 0.5 * std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(log_proposal(pp, SwitchVector::parse("10"), s), expected, 1e-14);
}

TEST(Proposal, InitFromMeasurements) {
  const auto net = load("toy4.json");
  const auto ms = simulate(net, net.default_switches(), nominal_injections(net), MeasurementConfig{0.34, 0.01, 0.1, 2});
  const auto pp = init_proposals(net, ms);
  EXPECT_EQ(pp.p_bino, std::vector<double>(2, 0.5));
  for (const auto& f : ms.forecasts) {
    EXPECT_EQ(pp.location[f.slot], f.p_mean);
    EXPECT_EQ(pp.scale[f.slot], f.p_std);
    EXPECT_DOUBLE_EQ(pp.upper[f.slot] - pp.lower[f.slot], 6.0 * f.p_std);
  }
  for (auto ld : ms.layout.metered_loads)
    for (std::size_t k = net.first_slot(ld); k < net.first_slot(ld) + net.loads()[ld].phases.size(); ++k)
      EXPECT_GT(pp.scale[k], 0.0);
}

TEST(Update, ClampsProbabilities) {
  auto pp = box_proposal(3, 0, 0.0, 0.0);
  Ensemble e;
  for (const char* b : {"110", "100"}) {
    Sample s;
    s.b = SwitchVector::parse(b);
    s.norm_weight = 0.5;
    e.samples.push_back(s);
  }
  const auto next = pmc_update(pp, e);
  EXPECT_EQ(next.p_bino, (std::vector<double>{0.85, 0.5, 0.15}));
  EXPECT_EQ(pmc_update(pp, e, 0.0, 1.0).p_bino, (std::vector<double>{1.0, 0.5, 0.0}));
}

TEST(Decide, ThresholdAndConfidenceBand) {
  const auto d = decide_switches({0.52, 0.5, 0.44, 0.55, 0.9, 0.45});
  EXPECT_EQ(d.b.str(), "110110");
  EXPECT_EQ(d.low_confidence, (std::vector<std::uint8_t>{1, 1, 0, 1, 0, 1}));
  EXPECT_THROW(decide_switches({1.2}), ConfigError);
  EXPECT_THROW(decide_switches({std::nan("")}), ConfigError);
}

TEST(Surrogate, WeightedMeanMatchesGaussianPosterior) {
  // Flat prior, y = p + e with sd 0.1: the posterior of p is N(0.3, 0.1^2).
  Surrogate m;
  m.n = 1;
  m.y = {0.3};
  m.sig = {0.1};
  const auto pp = box_proposal(0, 1, 0.0, 1.0);
  std::mt19937_64 rng(8);
  auto e = weigh(draw(pp, 40000, rng), pp, m);
  normalize(e);
  const auto est = mean_estimate(e);
  EXPECT_NEAR(est.s.p[0], 0.3, 3.0 * 0.1 / std::sqrt(effective_sample_size(e)));
  double var = 0.0;
  for (const auto& s : e.samples) var += s.norm_weight * (s.s.p[0] - est.s.p[0]) * (s.s.p[0] - est.s.p[0]);
  EXPECT_NEAR(std::sqrt(var), 0.1, 0.01);
}

TEST(Surrogate, AisRecoversSwitchBits) {
  Surrogate m;
  m.ns = 8;
  m.n = 1;
  const auto truth = SwitchVector::parse("10110010");
  for (std::size_t i = 0; i < 8; ++i) m.y.push_back(truth.closed(i));
  m.y.push_back(0.0);
  m.sig.assign(9, 0.3);
  InferenceConfig cfg;
  cfg.samples = 500;
  cfg.iterations = 4;
  const auto r = run_ais(m, box_proposal(8, 1, 0.0, 1.0), cfg);
  EXPECT_EQ(r.b_hat, truth);
  EXPECT_EQ(r.diagnostics.size(), 4u);
  EXPECT_EQ(r.map.b, truth);
  for (const auto& d : r.diagnostics) EXPECT_EQ(d.finite, 500u);
}

TEST(Surrogate, DegenerateEnsembleReportsDiagnostics) {
  Surrogate m;
  m.ns = 2;
  m.fail = true;
  InferenceConfig cfg;
  cfg.samples = 10;
  try {
    run_ais(m, box_proposal(2, 0, 0.0, 0.0), cfg);
    FAIL() << "expected DegenerateEnsembleError";
  } catch (const DegenerateEnsembleError& e) {
    ASSERT_EQ(e.diagnostics.size(), 1u);
    EXPECT_TRUE(e.diagnostics[0].redrawn);
  }
}

TEST(GridModelTest, NaiveAddsForecastRows) {
  auto net = std::make_shared<const Network>(load("small6sw.json"));
  const auto ms = simulate(*net, net->default_switches(), nominal_injections(*net), MeasurementConfig{0.3, 0.01, 0.1, 4});
  const GridModel robust(net, ms, LikelihoodMode::robust), naive(net, ms, LikelihoodMode::naive);
  EXPECT_EQ(robust.target().size(), ms.y.size());
  EXPECT_EQ(naive.target().size(), ms.y.size() + 2 * ms.forecasts.size());
  std::vector<double> out;
  ASSERT_TRUE(naive.predict(net->default_switches(), nominal_injections(*net), out));
  EXPECT_EQ(out.size(), naive.target().size());
  // All switches open: forecast rows predict zero consumption.
  ASSERT_TRUE(naive.predict(SwitchVector(net->switch_count(), false), nominal_injections(*net), out));
}

TEST(Drivers, IsIsOneAisIteration) {
  auto net = std::make_shared<const Network>(load("toy4.json"));
  const auto ms = simulate(*net, SwitchVector::parse("10"), nominal_injections(*net), MeasurementConfig{0.34, 0.01, 0.1, 9});
  InferenceConfig cfg;
  cfg.samples = 200;
  cfg.iterations = 1;
  cfg.seed = 77;
  const auto a = run_ais(net, ms, cfg);
  cfg.iterations = 5;
  const auto b = run_is(net, ms, cfg);
  EXPECT_EQ(a.p_bino, b.p_bino);
  EXPECT_EQ(a.s_hat.p, b.s_hat.p);
  EXPECT_EQ(b.iterations, 1u);
}

TEST(Drivers, IndependentOfWorkerCount) {
  auto net = std::make_shared<const Network>(load("small6sw.json"));
  const auto truth = SwitchVector::parse("101101");
  const auto ms = simulate(*net, truth, nominal_injections(*net), MeasurementConfig{0.3, 0.01, 0.1, 12});
  InferenceConfig cfg;
  cfg.samples = 300;
  cfg.iterations = 3;
  cfg.seed = 4;
  const auto one = run_ais(net, ms, cfg);
  cfg.workers = 4;
  const auto four = run_ais(net, ms, cfg);
  EXPECT_EQ(one.p_bino, four.p_bino);
  EXPECT_EQ(one.s_hat.p, four.s_hat.p);
  EXPECT_EQ(one.map.b, four.map.b);
  EXPECT_EQ(one.map.log_posterior, four.map.log_posterior);
}

TEST(Drivers, ToyLowNoiseFindsTruth) {
  // Forecasts only: a meter on a dead load would read zero and make the
  // switch feeding it unidentifiable.
  auto net = std::make_shared<const Network>(load("toy4.json"));
  for (const char* t : {"11", "10", "01", "00"}) {
    const auto truth = SwitchVector::parse(t);
    const auto ms = simulate(*net, truth, nominal_injections(*net), MeasurementConfig{0.0, 0.001, 0.01, 21});
    InferenceConfig cfg;
    cfg.samples = 200;
    cfg.iterations = 3;
    const auto r = run_ais(net, ms, cfg);
    EXPECT_EQ(r.map.b, truth) << t;
  }
}

TEST(Drivers, RejectsBadConfig) {
  InferenceConfig cfg;
  cfg.samples = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.samples = 1;
  cfg.p_min = 0.9;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(parse_mode("bogus"), ConfigError);
}
