#include <gtest/gtest.h>

#include "common.hpp"

using namespace gridtopo;
using testutil::load;

namespace {

const Network& feeder123() {
  static const Network net = load("ieee123_analog.json");
  return net;
}

CorrectedResult corrected(const Network& net, const char* b) {
  return correct(net, SwitchVector::parse(b), nominal_injections(net));
}

}  // namespace

TEST(Correct, OpenSwitchIsolatesItsChild) {
  // sw05 open cuts off the zone holding sw06.
  const auto& net = feeder123();
  const auto r = corrected(net, "1101001001101");
  EXPECT_TRUE(r.inestimable[5]);
  EXPECT_FALSE(r.inestimable[4]);  // the open switch itself still touches live bus n022
  EXPECT_FALSE(r.inestimable[0]);
}

TEST(Correct, ZeroesDeadLoadsOnly) {
  const auto net = load("toy4.json");
  const auto s = nominal_injections(net);
  const auto r = correct(net, SwitchVector::parse("10"), s);
  for (std::size_t k = 0; k < net.slot_count(); ++k) {
    const bool dead = net.loads()[net.load_slots()[k].load].bus_id == "n3";
    EXPECT_EQ(r.s_hat.p[k], dead ? 0.0 : s.p[k]);
    EXPECT_EQ(r.s_hat.q[k], dead ? 0.0 : s.q[k]);
  }
  EXPECT_EQ(r.inestimable, (std::vector<std::uint8_t>{0, 0}));
}

TEST(Correct, Idempotent) {
  const auto& net = feeder123();
  for (const char* b : {"1101001001101", "0000000000000", "1111111111111", "0110110110110"}) {
    const auto once = corrected(net, b);
    const auto twice = correct(net, once);
    EXPECT_EQ(once.b_hat, twice.b_hat);
    EXPECT_EQ(once.inestimable, twice.inestimable);
    EXPECT_EQ(once.s_hat.p, twice.s_hat.p);
    EXPECT_EQ(once.energized, twice.energized);
  }
}

TEST(Correct, WrongLength) {
  const auto net = load("toy4.json");
  EXPECT_THROW(correct(net, SwitchVector(3), nominal_injections(net)), ConfigError);
}

TEST(Accuracy, OneEstimableMiss) {
  const auto& net = feeder123();
  const auto truth = SwitchVector::parse("1101001001101");
  const auto r = corrected(net, "0101001001101");  // sw01 wrong
  EXPECT_DOUBLE_EQ(accuracy(net, truth, r, Stage::first), 12.0 / 13.0);
  // sw01 open also buries whatever hangs below it; those count correct only
  // when the truth agrees they are dead.
  EXPECT_LE(accuracy(net, truth, r, Stage::second), 12.0 / 13.0);
}

TEST(Accuracy, InestimableMissForgiven) {
  const auto& net = feeder123();
  const auto truth = SwitchVector::parse("1101001001101");
  const auto r = corrected(net, "1101011001101");  // sw06 flipped below open sw05
  EXPECT_DOUBLE_EQ(accuracy(net, truth, r, Stage::first), 12.0 / 13.0);
  EXPECT_DOUBLE_EQ(accuracy(net, truth, r, Stage::second), 1.0);
}

TEST(Accuracy, InestimableButLiveIsWrong) {
  // Estimate opens sw05, truth has it closed: sw06 is marked inestimable but
  // is live in the truth, so it scores wrong in the second stage.
  const auto& net = feeder123();
  const auto truth = SwitchVector::parse("1111111111111");
  const auto r = corrected(net, "1111011111111");
  EXPECT_DOUBLE_EQ(accuracy(net, truth, r, Stage::first), 12.0 / 13.0);
  ASSERT_TRUE(r.inestimable[5]);
  EXPECT_LE(accuracy(net, truth, r, Stage::second), 11.0 / 13.0);
}

TEST(Accuracy, PerfectEstimate) {
  const auto& net = feeder123();
  const auto truth = SwitchVector::parse("1101001001101");
  const auto r = corrected(net, "1101001001101");
  EXPECT_DOUBLE_EQ(accuracy(net, truth, r, Stage::first), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(net, truth, r, Stage::second), 1.0);
}

TEST(Accuracy, SecondStageNotWorseWhenOutagesAgree) {
  // Same energized region as the truth: marking never costs anything.
  const auto& net = feeder123();
  const auto truth = SwitchVector::parse("1101001001101");
  for (const char* b : {"1101011001101", "1101001001101"}) {
    const auto r = corrected(net, b);
    ASSERT_EQ(r.energized, energized_buses(net, truth));
    EXPECT_GE(accuracy(net, truth, r, Stage::second), accuracy(net, truth, r, Stage::first));
  }
}
