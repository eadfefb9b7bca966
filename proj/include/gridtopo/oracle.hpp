#pragma once

// Brute-force reference: scores every switch vector at fixed injections with
// the same log-posterior the sampler uses.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <vector>

#include "gridtopo/inference.hpp"
#include "gridtopo/measurement.hpp"
#include "gridtopo/netmodel.hpp"
#include "gridtopo/parallel.hpp"

namespace gridtopo {

inline constexpr std::size_t kOracleMaxSwitches = 20;

struct TopologyScore {
  SwitchVector b;
  double log_posterior = kNegInf;
  std::size_t rank = 0;  // 1 = best
};

/// i-th vector of the reflected binary Gray code; bit 0 is switch 0.
inline SwitchVector gray_vector(std::uint64_t i, std::size_t ns) {
  const std::uint64_t g = i ^ (i >> 1);
  std::vector<std::uint8_t> bits(ns);
  for (std::size_t k = 0; k < ns; ++k) bits[k] = (g >> k) & 1u;
  return SwitchVector(std::move(bits));
}

/// Full ranking, best first. Equal scores keep enumeration order.
template <ForwardModel M>
std::vector<TopologyScore> exhaustive_map(const M& model, const InjectionState& s_fixed, std::size_t workers = 1) {
  const auto ns = model.switch_count();
  if (ns > kOracleMaxSwitches)
    throw ConfigError("exhaustive search is capped at " + std::to_string(kOracleMaxSwitches) + " switches, feeder has " +
                      std::to_string(ns));
  const std::uint64_t total = std::uint64_t{1} << ns;
  std::vector<TopologyScore> scores(total);
  parallel_for(total, workers, [&](std::size_t i) {
    thread_local std::vector<double> pred;
    auto& sc = scores[i];
    sc.b = gray_vector(i, ns);
    if (model.predict(sc.b, s_fixed, pred)) sc.log_posterior = log_likelihood(model.target(), model.sigma(), pred);
  });
  std::stable_sort(scores.begin(), scores.end(),
                   [](const TopologyScore& a, const TopologyScore& b) { return a.log_posterior > b.log_posterior; });
  for (std::size_t r = 0; r < scores.size(); ++r) scores[r].rank = r + 1;
  return scores;
}

inline std::vector<TopologyScore> exhaustive_map(std::shared_ptr<const Network> net, const MeasurementSet& ms,
                                                 const InjectionState& s_fixed, LikelihoodMode mode,
                                                 std::size_t workers = 1, PowerFlowOptions pf = {}) {
  GridModel model(std::move(net), ms, mode, pf);
  return exhaustive_map(model, s_fixed, workers);
}

/// Injections made of the forecast means, with metered loads at their
/// readings: the proposal's initial locations.
inline InjectionState forecast_injections(const Network& net, const MeasurementSet& ms) {
  const auto pp = init_proposals(net, ms);
  const auto n = net.slot_count();
  InjectionState s;
  s.p.assign(pp.location.begin(), pp.location.begin() + static_cast<std::ptrdiff_t>(n));
  s.q.assign(pp.location.begin() + static_cast<std::ptrdiff_t>(n), pp.location.end());
  return s;
}

/// Lines that conduct and touch the energized region. Switch vectors with the
/// same set are indistinguishable to any measurement.
inline std::vector<std::uint8_t> energized_line_set(const Network& net, const SwitchVector& b) {
  const auto on = energized_buses(net, b);
  std::vector<std::uint8_t> out(net.line_count());
  for (std::size_t l = 0; l < net.line_count(); ++l) out[l] = line_active(net, b, l) && on[net.line_from(l)];
  return out;
}

inline bool equivalent_topologies(const Network& net, const SwitchVector& a, const SwitchVector& b) {
  return energized_line_set(net, a) == energized_line_set(net, b);
}

}  // namespace gridtopo
