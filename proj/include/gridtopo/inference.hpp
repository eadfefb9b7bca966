#pragma once

// Importance sampling over (switch vector, injections) with population Monte
// Carlo adaptation of the proposal.
//
// Weights are self-normalized: log w = log-likelihood - log q, the flat prior
// being a constant. Continuous dimensions with zero scale are held fixed and
// do not enter q.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "gridtopo/measurement.hpp"
#include "gridtopo/netmodel.hpp"
#include "gridtopo/parallel.hpp"
#include "gridtopo/powerflow.hpp"

namespace gridtopo {

enum class LikelihoodMode { naive, robust };

inline LikelihoodMode parse_mode(const std::string& s) {
  if (s == "robust") return LikelihoodMode::robust;
  if (s == "naive") return LikelihoodMode::naive;
  throw ConfigError("unknown likelihood mode '" + s + "' (expected naive or robust)");
}

inline const char* mode_name(LikelihoodMode m) { return m == LikelihoodMode::robust ? "robust" : "naive"; }

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Forward models

/// Anything that maps a candidate (b, s) to predicted measurements. predict()
/// must be safe to call concurrently and returns false when the candidate has
/// no valid prediction (e.g. the power flow diverges).
template <class M>
concept ForwardModel = requires(const M& m, const SwitchVector& b, const InjectionState& s, std::vector<double>& out) {
  { m.switch_count() } -> std::convertible_to<std::size_t>;
  { m.slot_count() } -> std::convertible_to<std::size_t>;
  { m.target() } -> std::convertible_to<const std::vector<double>&>;
  { m.sigma() } -> std::convertible_to<const std::vector<double>&>;
  { m.predict(b, s, out) } -> std::same_as<bool>;
};

/// Power-flow forward model. Robust mode compares only real meters; naive
/// mode also treats each forecast as a measurement of the slot's consumption.
class GridModel {
 public:
  GridModel(std::shared_ptr<const Network> net, const MeasurementSet& ms, LikelihoodMode mode,
            PowerFlowOptions pf = {})
      : net_(std::move(net)), layout_(ms.layout), mode_(mode), solver_(net_, with_head_only(pf)) {
    target_ = ms.y;
    sigma_ = ms.sigma;
    if (mode_ == LikelihoodMode::naive) {
      for (const auto& f : ms.forecasts) {
        forecast_slots_.push_back(f.slot);
        target_.push_back(f.p_mean);
        sigma_.push_back(f.p_std);
      }
      for (const auto& f : ms.forecasts) {
        target_.push_back(f.q_mean);
        sigma_.push_back(f.q_std);
      }
    }
  }

  std::size_t switch_count() const { return net_->switch_count(); }
  std::size_t slot_count() const { return net_->slot_count(); }
  const std::vector<double>& target() const { return target_; }
  const std::vector<double>& sigma() const { return sigma_; }
  const Network& network() const { return *net_; }
  LikelihoodMode mode() const { return mode_; }

  bool predict(const SwitchVector& b, const InjectionState& s, std::vector<double>& out) const {
    PowerFlowSolution sol;
    try {
      sol = solver_.solve(b, s);
    } catch (const NumericalError&) {
      return false;
    }
    if (!sol.converged) return false;
    out.clear();
    append_observables(sol, *net_, layout_, out);
    if (mode_ == LikelihoodMode::naive) {
      for (auto k : forecast_slots_) out.push_back(sol.load_p[k]);
      for (auto k : forecast_slots_) out.push_back(sol.load_q[k]);
    }
    return true;
  }

 private:
  static PowerFlowOptions with_head_only(PowerFlowOptions pf) {
    pf.all_line_flows = false;
    return pf;
  }

  std::shared_ptr<const Network> net_;
  ObservableLayout layout_;
  LikelihoodMode mode_;
  PowerFlowSolver solver_;
  std::vector<double> target_, sigma_;
  std::vector<std::size_t> forecast_slots_;
};

static_assert(ForwardModel<GridModel>);

// ---------------------------------------------------------------------------
// Proposals and samples

/// Continuous dimension d < slots is P of slot d, otherwise Q of slot d - slots.
struct ProposalParams {
  std::vector<double> p_bino;
  std::vector<double> location, scale, lower, upper;

  std::size_t slots() const { return location.size() / 2; }
};

inline ProposalParams init_proposals(const Network& net, const MeasurementSet& ms) {
  const auto n = net.slot_count();
  ProposalParams pp;
  pp.p_bino.assign(net.switch_count(), 0.5);
  pp.location.assign(2 * n, 0.0);
  pp.scale.assign(2 * n, 0.0);
  auto set = [&](std::size_t d, double mean, double std) {
    pp.location[d] = mean;
    pp.scale[d] = std;
  };
  for (const auto& f : ms.forecasts) {
    set(f.slot, f.p_mean, f.p_std);
    set(n + f.slot, f.q_mean, f.q_std);
  }
  // Metered loads: their own readings, laid out after the head-line block.
  std::size_t row = 2 * net.lines()[ms.layout.head_line].phases.size();
  for (auto ld : ms.layout.metered_loads) {
    const auto first = net.first_slot(ld), np = net.loads()[ld].phases.size();
    for (std::size_t k = 0; k < np; ++k) {
      set(first + k, ms.y[row + k], ms.sigma[row + k]);
      set(n + first + k, ms.y[row + np + k], ms.sigma[row + np + k]);
    }
    row += 2 * np;
  }
  pp.lower.resize(2 * n);
  pp.upper.resize(2 * n);
  for (std::size_t d = 0; d < 2 * n; ++d) std::tie(pp.lower[d], pp.upper[d]) = bounds_from_stats(pp.location[d], pp.scale[d]);
  return pp;
}

/// Pins every continuous dimension to `s` (zero scale, degenerate bounds).
inline void fix_injections(ProposalParams& pp, const InjectionState& s) {
  const auto n = s.size();
  pp.location.resize(2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    pp.location[k] = s.p[k];
    pp.location[n + k] = s.q[k];
  }
  pp.scale.assign(2 * n, 0.0);
  pp.lower = pp.location;
  pp.upper = pp.location;
}

struct Sample {
  SwitchVector b;
  InjectionState s;
  double log_weight = kNegInf;
  double norm_weight = 0.0;
  double log_posterior = kNegInf;  // up to the dropped prior constant
};

struct Ensemble {
  std::vector<Sample> samples;
  std::size_t iteration = 0;
};

struct Draw {
  SwitchVector b;
  InjectionState s;
};

/// Per sample: switch bits in index order, then P and Q dimensions in order.
/// Fixed (zero-scale) dimensions consume no random numbers.
inline std::vector<Draw> draw(const ProposalParams& pp, std::size_t k, std::mt19937_64& rng) {
  if (k == 0) throw ConfigError("sample count must be >= 1");
  const auto n = pp.slots();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Draw> out(k);
  for (auto& d : out) {
    std::vector<std::uint8_t> bits(pp.p_bino.size());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = unif(rng) < pp.p_bino[i] ? 1 : 0;
    d.b = SwitchVector(std::move(bits));
    d.s.p.resize(n);
    d.s.q.resize(n);
    for (std::size_t dim = 0; dim < 2 * n; ++dim) {
      double x = pp.location[dim];
      if (pp.scale[dim] > 0.0) x = std::clamp(x + pp.scale[dim] * gauss(rng), pp.lower[dim], pp.upper[dim]);
      (dim < n ? d.s.p[dim] : d.s.q[dim - n]) = x;
    }
  }
  return out;
}

/// log q(b, s). Clamped draws are scored by the Gaussian density at the
/// clamped point.
inline double log_proposal(const ProposalParams& pp, const SwitchVector& b, const InjectionState& s) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) acc += std::log(b.closed(i) ? pp.p_bino[i] : 1.0 - pp.p_bino[i]);
  const auto n = pp.slots();
  for (std::size_t dim = 0; dim < 2 * n; ++dim) {
    const double sc = pp.scale[dim];
    if (!(sc > 0.0)) continue;
    const double z = ((dim < n ? s.p[dim] : s.q[dim - n]) - pp.location[dim]) / sc;
    acc -= 0.5 * z * z + std::log(sc) + half_log_2pi;
  }
  return acc;
}

/// Evaluates every draw (in parallel) and returns the unnormalized ensemble.
template <ForwardModel M>
Ensemble weigh(std::vector<Draw> draws, const ProposalParams& pp, const M& model, std::size_t workers = 1) {
  if (draws.empty()) throw ConfigError("weigh: no draws");
  Ensemble e;
  e.samples.resize(draws.size());
  parallel_for(draws.size(), workers, [&](std::size_t i) {
    thread_local std::vector<double> pred;
    auto& smp = e.samples[i];
    smp.b = std::move(draws[i].b);
    smp.s = std::move(draws[i].s);
    if (model.predict(smp.b, smp.s, pred)) {
      smp.log_posterior = log_likelihood(model.target(), model.sigma(), pred);
      smp.log_weight = smp.log_posterior - log_proposal(pp, smp.b, smp.s);
    }
    if (std::isnan(smp.log_weight)) smp.log_weight = kNegInf;
  });
  return e;
}

inline std::size_t finite_count(const Ensemble& e) {
  return static_cast<std::size_t>(
      std::count_if(e.samples.begin(), e.samples.end(), [](const Sample& s) { return std::isfinite(s.log_weight); }));
}

/// Softmax of the log-weights with max-subtraction.
inline std::vector<double> normalize_log_weights(const std::vector<double>& lw) {
  double mx = kNegInf;
  for (double v : lw)
    if (v > mx) mx = v;
  if (!std::isfinite(mx)) throw NumericalError("cannot normalize: no finite log-weight");
  std::vector<double> w(lw.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < lw.size(); ++i) {
    if (!std::isfinite(lw[i])) continue;
    w[i] = std::exp(lw[i] - mx);
    sum += w[i];
  }
  for (auto& x : w) x /= sum;
  return w;
}

inline void normalize(Ensemble& e) {
  std::vector<double> lw(e.samples.size());
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = e.samples[i].log_weight;
  const auto w = normalize_log_weights(lw);
  for (std::size_t i = 0; i < w.size(); ++i) e.samples[i].norm_weight = w[i];
}

inline double effective_sample_size(const Ensemble& e) {
  double s2 = 0.0;
  for (const auto& s : e.samples) s2 += s.norm_weight * s.norm_weight;
  return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

/// m independent categorical draws of sample indices with probabilities w̄.
inline std::vector<std::size_t> resample_indices(const Ensemble& e, std::size_t m, std::mt19937_64& rng) {
  std::vector<double> cdf(e.samples.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) cdf[i] = acc += e.samples[i].norm_weight;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::size_t> out(m);
  for (auto& idx : out) {
    const double u = unif(rng) * acc;
    idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    idx = std::min(idx, cdf.size() - 1);
  }
  return out;
}

inline std::vector<Sample> resample_equal_weight(const Ensemble& e, std::size_t m, std::mt19937_64& rng) {
  std::vector<Sample> out;
  out.reserve(m);
  for (auto i : resample_indices(e, m, rng)) {
    out.push_back(e.samples[i]);
    out.back().norm_weight = 1.0 / static_cast<double>(m);
  }
  return out;
}

struct MeanEstimate {
  std::vector<double> p_closed;
  InjectionState s;
};

inline MeanEstimate mean_estimate(const Ensemble& e) {
  MeanEstimate m;
  if (e.samples.empty()) return m;
  const auto ns = e.samples.front().b.size(), n = e.samples.front().s.size();
  m.p_closed.assign(ns, 0.0);
  m.s.p.assign(n, 0.0);
  m.s.q.assign(n, 0.0);
  for (const auto& smp : e.samples) {
    const double w = smp.norm_weight;
    if (w == 0.0) continue;
    for (std::size_t i = 0; i < ns; ++i)
      if (smp.b.closed(i)) m.p_closed[i] += w;
    for (std::size_t k = 0; k < n; ++k) {
      m.s.p[k] += w * smp.s.p[k];
      m.s.q[k] += w * smp.s.q[k];
    }
  }
  for (auto& p : m.p_closed) p = std::min(p, 1.0);  // summation rounding
  return m;
}

/// Highest log-posterior among the evaluated samples; ties go to the lowest
/// index.
inline const Sample& map_estimate(const Ensemble& e) {
  if (e.samples.empty()) throw ConfigError("map_estimate: empty ensemble");
  std::size_t best = 0;
  for (std::size_t i = 1; i < e.samples.size(); ++i)
    if (e.samples[i].log_posterior > e.samples[best].log_posterior) best = i;
  return e.samples[best];
}

inline ProposalParams pmc_update(const ProposalParams& pp, const Ensemble& e, double p_min = 0.15,
                                 double p_max = 0.85) {
  const auto m = mean_estimate(e);
  ProposalParams next = pp;
  for (std::size_t i = 0; i < next.p_bino.size(); ++i) next.p_bino[i] = std::clamp(m.p_closed[i], p_min, p_max);
  const auto n = pp.slots();
  for (std::size_t d = 0; d < 2 * n; ++d) {
    if (!(pp.scale[d] > 0.0)) continue;
    next.location[d] = std::clamp(d < n ? m.s.p[d] : m.s.q[d - n], pp.lower[d], pp.upper[d]);
  }
  return next;
}

struct SwitchDecision {
  SwitchVector b;
  std::vector<std::uint8_t> low_confidence;
};

inline SwitchDecision decide_switches(const std::vector<double>& p) {
  SwitchDecision d;
  std::vector<std::uint8_t> bits(p.size());
  d.low_confidence.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw ConfigError("switch probability outside [0, 1]");
    bits[i] = p[i] >= 0.5 ? 1 : 0;
    d.low_confidence[i] = (p[i] >= 0.45 && p[i] <= 0.55) ? 1 : 0;
  }
  d.b = SwitchVector(std::move(bits));
  return d;
}

// ---------------------------------------------------------------------------
// Drivers

struct InferenceConfig {
  std::size_t samples = 1000;    // K per iteration
  std::size_t iterations = 6;    // j_max
  LikelihoodMode mode = LikelihoodMode::robust;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  double p_min = 0.15, p_max = 0.85;

  void validate() const {
    if (samples < 1) throw ConfigError("samples must be >= 1");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (!(p_min >= 0.0 && p_min <= p_max && p_max <= 1.0)) throw ConfigError("invalid p_bino clamp range");
  }
};

struct IterationDiagnostics {
  std::size_t iteration = 0;
  double ess = 0.0;
  std::size_t finite = 0;
  bool redrawn = false;
  double best_log_posterior = kNegInf;
  std::vector<double> p_closed;  // posterior mean before clamping
  SwitchVector b_hat;
};

struct EstimationResult {
  SwitchVector b_hat;
  std::vector<double> p_bino;  // final posterior-mean closed probabilities
  std::vector<std::uint8_t> low_confidence;
  InjectionState s_hat;
  Sample map;  // best log-posterior over all iterations
  Ensemble posterior;
  std::size_t iterations = 0;
  std::vector<IterationDiagnostics> diagnostics;
};

class DegenerateEnsembleError : public NumericalError {
 public:
  DegenerateEnsembleError(const std::string& what, std::vector<IterationDiagnostics> diag)
      : NumericalError(what), diagnostics(std::move(diag)) {}
  std::vector<IterationDiagnostics> diagnostics;
};

template <ForwardModel M>
EstimationResult run_ais(const M& model, ProposalParams pp, const InferenceConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  EstimationResult res;
  Ensemble ens;
  for (std::size_t j = 1; j <= cfg.iterations; ++j) {
    IterationDiagnostics diag;
    diag.iteration = j;
    ens = weigh(draw(pp, cfg.samples, rng), pp, model, cfg.workers);
    if (finite_count(ens) == 0) {
      // One retry with widened continuous proposals.
      ProposalParams wide = pp;
      for (auto& s : wide.scale) s *= 2.0;
      ens = weigh(draw(wide, cfg.samples, rng), wide, model, cfg.workers);
      diag.redrawn = true;
      if (finite_count(ens) == 0) {
        res.diagnostics.push_back(diag);
        throw DegenerateEnsembleError("iteration " + std::to_string(j) + ": every sample has zero weight",
                                      std::move(res.diagnostics));
      }
    }
    ens.iteration = j;
    normalize(ens);
    diag.ess = effective_sample_size(ens);
    diag.finite = finite_count(ens);
    const auto& best = map_estimate(ens);
    diag.best_log_posterior = best.log_posterior;
    if (j == 1 || best.log_posterior > res.map.log_posterior) res.map = best;
    auto m = mean_estimate(ens);
    diag.p_closed = m.p_closed;
    diag.b_hat = decide_switches(m.p_closed).b;
    res.diagnostics.push_back(std::move(diag));
    res.p_bino = std::move(m.p_closed);
    res.s_hat = std::move(m.s);
    if (j < cfg.iterations) pp = pmc_update(pp, ens, cfg.p_min, cfg.p_max);
  }
  auto dec = decide_switches(res.p_bino);
  res.b_hat = std::move(dec.b);
  res.low_confidence = std::move(dec.low_confidence);
  res.posterior = std::move(ens);
  res.iterations = cfg.iterations;
  return res;
}

/// Plain importance sampling: a single AIS iteration.
template <ForwardModel M>
EstimationResult run_is(const M& model, ProposalParams pp, InferenceConfig cfg) {
  cfg.iterations = 1;
  return run_ais(model, std::move(pp), cfg);
}

inline EstimationResult run_ais(std::shared_ptr<const Network> net, const MeasurementSet& ms,
                                const InferenceConfig& cfg, PowerFlowOptions pf = {}) {
  GridModel model(net, ms, cfg.mode, pf);
  return run_ais(model, init_proposals(*net, ms), cfg);
}

inline EstimationResult run_is(std::shared_ptr<const Network> net, const MeasurementSet& ms, InferenceConfig cfg,
                               PowerFlowOptions pf = {}) {
  cfg.iterations = 1;
  return run_ais(std::move(net), ms, cfg, pf);
}

}  // namespace gridtopo
