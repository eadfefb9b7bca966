#pragma once

// Synthetic measurement scenarios and the Gaussian likelihood.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gridtopo/netmodel.hpp"
#include "gridtopo/powerflow.hpp"

namespace gridtopo {

struct MeasurementConfig {
  double meter_ratio = 0.3;
  double meter_sigma = 0.01;     // relative
  double forecast_sigma = 0.05;  // relative
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (!(meter_ratio >= 0.0 && meter_ratio <= 1.0)) throw ConfigError("meter_ratio must lie in [0, 1]");
    if (!(meter_sigma >= 0.0) || !std::isfinite(meter_sigma)) throw ConfigError("meter_sigma must be >= 0");
    if (!(forecast_sigma >= 0.0) || !std::isfinite(forecast_sigma)) throw ConfigError("forecast_sigma must be >= 0");
  }
};

/// Pseudomeasurement for one unmetered (load, phase) slot.
struct Forecast {
  std::size_t slot = 0;
  double p_mean = 0.0, p_std = 0.0;
  double q_mean = 0.0, q_std = 0.0;
};

struct MeasurementSet {
  ObservableLayout layout;
  std::vector<double> y;      // layout order
  std::vector<double> sigma;  // absolute std per entry
  std::vector<Forecast> forecasts;  // slot order, unmetered loads only

  std::size_t dimension() const { return y.size(); }
  bool metered(std::size_t load) const {
    return std::binary_search(layout.metered_loads.begin(), layout.metered_loads.end(), load);
  }
};

/// Smallest standard deviation used anywhere, kW/kvar.
inline double sigma_floor(const Network& net) { return 1e-6 * net.base().kva; }

inline std::pair<double, double> bounds_from_stats(double mean, double std) {
  if (std < 0.0) throw ConfigError("negative standard deviation");
  return {mean - 3.0 * std, mean + 3.0 * std};
}

/// Picks round(ratio * loads) metered loads uniformly without replacement;
/// returned ascending.
inline std::vector<std::size_t> choose_meters(std::size_t load_count, double ratio, std::mt19937_64& rng) {
  const auto m = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(load_count)));
  std::vector<std::size_t> idx(load_count);
  for (std::size_t i = 0; i < load_count; ++i) idx[i] = i;
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, load_count - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Draw order: meters, then measurement noise in layout order, then forecasts
/// in slot order (P then Q per slot).
inline MeasurementSet simulate(const Network& net, const SwitchVector& true_b, const InjectionState& true_s,
                               const MeasurementConfig& cfg, PowerFlowOptions pf = {}) {
  cfg.validate();
  std::mt19937_64 rng(cfg.rng_seed);
  MeasurementSet ms;
  ms.layout.head_line = net.head_line();
  ms.layout.metered_loads = choose_meters(net.load_count(), cfg.meter_ratio, rng);

  pf.all_line_flows = false;
  const auto sol = PowerFlowSolver(net, pf).solve(true_b, true_s);
  if (!sol.converged)
    throw NumericalError("power flow does not converge at the ground truth (" + std::to_string(sol.iterations) +
                         " iterations, residual " + std::to_string(sol.max_residual) + ")");
  const auto truth = observables(sol, net, ms.layout);
  const double floor = sigma_floor(net);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ms.y.resize(truth.size());
  ms.sigma.resize(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ms.sigma[i] = std::max(cfg.meter_sigma * std::abs(truth[i]), floor);
    ms.y[i] = truth[i] + ms.sigma[i] * gauss(rng);
  }

  // Forecasts are built from the demanded injections and so ignore outages.
  for (std::size_t ld = 0; ld < net.load_count(); ++ld) {
    if (ms.metered(ld)) continue;
    const auto first = net.first_slot(ld);
    for (std::size_t k = first; k < first + net.loads()[ld].phases.size(); ++k) {
      Forecast f;
      f.slot = k;
      f.p_std = std::max(cfg.forecast_sigma * std::abs(true_s.p[k]), floor);
      f.p_mean = true_s.p[k] + f.p_std * gauss(rng);
      f.q_std = std::max(cfg.forecast_sigma * std::abs(true_s.q[k]), floor);
      f.q_mean = true_s.q[k] + f.q_std * gauss(rng);
      ms.forecasts.push_back(f);
    }
  }
  return ms;
}

/// Sum of independent Gaussian log-densities of y around `predicted`.
inline double log_likelihood(const std::vector<double>& y, const std::vector<double>& sigma,
                             const std::vector<double>& predicted) {
  if (y.size() != sigma.size() || predicted.size() != y.size())
    throw ConfigError("log_likelihood: dimension mismatch (" + std::to_string(y.size()) + " measurements, " +
                      std::to_string(predicted.size()) + " predictions)");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = (y[i] - predicted[i]) / sigma[i];
    acc -= 0.5 * r * r + std::log(sigma[i]) + half_log_2pi;
  }
  return acc;
}

/// nullopt stands for an unconverged prediction.
inline double log_likelihood(const MeasurementSet& ms, const std::optional<std::vector<double>>& predicted) {
  if (!predicted) return -std::numeric_limits<double>::infinity();
  return log_likelihood(ms.y, ms.sigma, *predicted);
}

// ---------------------------------------------------------------------------
// Scenario files

struct Scenario {
  SwitchVector truth;
  InjectionState injections;
  MeasurementConfig config;
  MeasurementSet measurements;
};

inline Scenario make_scenario(const Network& net, const SwitchVector& truth, const InjectionState& s,
                              const MeasurementConfig& cfg, PowerFlowOptions pf = {}) {
  return {truth, s, cfg, simulate(net, truth, s, cfg, pf)};
}

inline nlohmann::json scenario_to_json(const Network& net, const Scenario& sc) {
  using nlohmann::json;
  const auto& ms = sc.measurements;
  json metered = json::array();
  for (auto ld : ms.layout.metered_loads) metered.push_back(net.loads()[ld].id);
  json forecasts = json::array();
  for (const auto& f : ms.forecasts) {
    const auto& slot = net.load_slots()[f.slot];
    forecasts.push_back({{"load", net.loads()[slot.load].id},
                         {"phase", std::string(1, phase_char(slot.phase))},
                         {"p_mean", f.p_mean},
                         {"p_std", f.p_std},
                         {"q_mean", f.q_mean},
                         {"q_std", f.q_std}});
  }
  return {{"truth", sc.truth.str()},
          {"injections", {{"p", sc.injections.p}, {"q", sc.injections.q}}},
          {"config",
           {{"meter_ratio", sc.config.meter_ratio},
            {"meter_sigma", sc.config.meter_sigma},
            {"forecast_sigma", sc.config.forecast_sigma},
            {"rng_seed", sc.config.rng_seed}}},
          {"measurements",
           {{"head_line", net.lines()[ms.layout.head_line].id},
            {"metered_loads", metered},
            {"y", ms.y},
            {"sigma", ms.sigma},
            {"forecasts", forecasts}}}};
}

inline Scenario scenario_from_json(const Network& net, const nlohmann::json& j) {
  using detail::require;
  Scenario sc;
  try {
    sc.truth = SwitchVector::parse(require(j, "truth", "scenario").get<std::string>());
    check_switch_length(net, sc.truth);
    const auto& inj = require(j, "injections", "scenario");
    sc.injections.p = require(inj, "p", "scenario.injections").get<std::vector<double>>();
    sc.injections.q = require(inj, "q", "scenario.injections").get<std::vector<double>>();
    if (sc.injections.p.size() != net.slot_count() || sc.injections.q.size() != net.slot_count())
      throw ConfigError("scenario.injections: expected " + std::to_string(net.slot_count()) + " slots");
    const auto& c = require(j, "config", "scenario");
    sc.config.meter_ratio = require(c, "meter_ratio", "scenario.config").get<double>();
    sc.config.meter_sigma = require(c, "meter_sigma", "scenario.config").get<double>();
    sc.config.forecast_sigma = require(c, "forecast_sigma", "scenario.config").get<double>();
    sc.config.rng_seed = require(c, "rng_seed", "scenario.config").get<std::uint64_t>();
    const auto& m = require(j, "measurements", "scenario");
    auto& ms = sc.measurements;
    ms.layout.head_line = net.line_index(require(m, "head_line", "scenario.measurements").get<std::string>());
    for (const auto& id : require(m, "metered_loads", "scenario.measurements"))
      ms.layout.metered_loads.push_back(net.load_index(id.get<std::string>()));
    std::sort(ms.layout.metered_loads.begin(), ms.layout.metered_loads.end());
    ms.y = require(m, "y", "scenario.measurements").get<std::vector<double>>();
    ms.sigma = require(m, "sigma", "scenario.measurements").get<std::vector<double>>();
    if (ms.y.size() != ms.layout.dimension(net) || ms.sigma.size() != ms.y.size())
      throw ConfigError("scenario.measurements: y/sigma do not match the observable layout (" +
                        std::to_string(ms.layout.dimension(net)) + " entries)");
    for (double s : ms.sigma)
      if (!(s > 0.0)) throw ConfigError("scenario.measurements.sigma: entries must be > 0");
    std::size_t i = 0;
    for (const auto& f : require(m, "forecasts", "scenario.measurements")) {
      const std::string where = "scenario.measurements.forecasts[" + std::to_string(i++) + "]";
      const auto ld = net.load_index(require(f, "load", where).get<std::string>());
      const auto ph = PhaseSet::parse(require(f, "phase", where).get<std::string>());
      const auto pos = net.loads()[ld].phases.position(ph.phases().front());
      if (ph.size() != 1 || pos == PhaseSet::npos) throw ConfigError(where + ": phase not on load");
      Forecast fc;
      fc.slot = net.first_slot(ld) + pos;
      fc.p_mean = require(f, "p_mean", where).get<double>();
      fc.p_std = require(f, "p_std", where).get<double>();
      fc.q_mean = require(f, "q_mean", where).get<double>();
      fc.q_std = require(f, "q_std", where).get<double>();
      ms.forecasts.push_back(fc);
    }
    std::sort(ms.forecasts.begin(), ms.forecasts.end(),
              [](const Forecast& a, const Forecast& b) { return a.slot < b.slot; });
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  return sc;
}

inline void save_scenario(const Network& net, const Scenario& sc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write scenario file '" + path + "'");
  out << scenario_to_json(net, sc).dump(1) << '\n';
}

inline Scenario load_scenario(const Network& net, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("scenario: invalid JSON: ") + e.what());
  }
  return scenario_from_json(net, j);
}

}  // namespace gridtopo
