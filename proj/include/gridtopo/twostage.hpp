#pragma once

// Island correction applied to a first-stage estimate: whatever the estimated
// switch vector leaves without a path to the source carries no load, and
// switches buried there cannot be observed.

#include <cstdint>
#include <vector>

#include "gridtopo/inference.hpp"
#include "gridtopo/netmodel.hpp"

namespace gridtopo {

struct CorrectedResult {
  SwitchVector b_hat;
  std::vector<std::uint8_t> inestimable;  // per switch
  InjectionState s_hat;
  std::vector<std::uint8_t> energized;  // per bus, under b_hat
};

/// True when neither end of the switch's line is energized under `b`.
inline bool switch_isolated(const Network& net, const std::vector<std::uint8_t>& energized, std::size_t sw) {
  const auto l = net.switch_line(sw);
  return !energized[net.line_from(l)] && !energized[net.line_to(l)];
}

inline CorrectedResult correct(const Network& net, const SwitchVector& b_hat, const InjectionState& s_hat) {
  check_switch_length(net, b_hat);
  CorrectedResult r;
  r.b_hat = b_hat;
  r.s_hat = s_hat;
  r.energized = energized_buses(net, b_hat);
  r.inestimable.resize(net.switch_count());
  for (std::size_t sw = 0; sw < net.switch_count(); ++sw) r.inestimable[sw] = switch_isolated(net, r.energized, sw);
  for (std::size_t ld = 0; ld < net.load_count(); ++ld) {
    if (r.energized[net.load_bus(ld)]) continue;
    const auto first = net.first_slot(ld);
    for (std::size_t k = first; k < first + net.loads()[ld].phases.size(); ++k) {
      r.s_hat.p[k] = 0.0;
      r.s_hat.q[k] = 0.0;
    }
  }
  return r;
}

inline CorrectedResult correct(const Network& net, const EstimationResult& res) {
  return correct(net, res.b_hat, res.s_hat);
}

inline CorrectedResult correct(const Network& net, const CorrectedResult& r) { return correct(net, r.b_hat, r.s_hat); }

enum class Stage { first, second };

/// Fraction of switches scored correct. First stage: plain bit match. Second
/// stage: an inestimable switch counts as correct exactly when its line is
/// de-energized in the ground truth; other switches by bit match.
inline double accuracy(const Network& net, const SwitchVector& truth, const CorrectedResult& r, Stage stage) {
  check_switch_length(net, truth);
  check_switch_length(net, r.b_hat);
  const auto ns = net.switch_count();
  if (ns == 0) return 1.0;
  const auto truly_on = energized_buses(net, truth);
  std::size_t ok = 0;
  for (std::size_t sw = 0; sw < ns; ++sw) {
    if (stage == Stage::second && r.inestimable[sw]) ok += switch_isolated(net, truly_on, sw) ? 1 : 0;
    else ok += truth.closed(sw) == r.b_hat.closed(sw) ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(ns);
}

}  // namespace gridtopo
