#pragma once

// Three-phase unbalanced power flow by fixed-point current injection:
//   V_n <- Y_nn^-1 (I_load(V) - Y_ns V_s),   I_load = conj(S / V)
// on the energized part of the network. Non-energized terminals are masked
// out of the factorization, so the sparsity pattern, and with it the
// symbolic factorization, is shared by every switch vector.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "gridtopo/netmodel.hpp"
#include "gridtopo/sparse_ldlt.hpp"
#include "gridtopo/ybus.hpp"

namespace gridtopo {

/// Consumed active/reactive power per load slot (kW, kvar).
struct InjectionState {
  std::vector<double> p;
  std::vector<double> q;

  std::size_t size() const { return p.size(); }
  friend bool operator==(const InjectionState&, const InjectionState&) = default;
};

inline InjectionState nominal_injections(const Network& net) {
  InjectionState s;
  for (const auto& ld : net.loads()) {
    s.p.insert(s.p.end(), ld.nominal_p.begin(), ld.nominal_p.end());
    s.q.insert(s.q.end(), ld.nominal_q.begin(), ld.nominal_q.end());
  }
  return s;
}

inline InjectionState zero_injections(const Network& net) {
  return {std::vector<double>(net.slot_count(), 0.0), std::vector<double>(net.slot_count(), 0.0)};
}

struct PowerFlowOptions {
  double tolerance = 1e-8;
  std::size_t max_iterations = 100;
  bool all_line_flows = true;  // false: only the head line's flow is filled in
};

struct PowerFlowSolution {
  std::vector<cplx> voltage;                  // per terminal, pu; 0 when de-energized
  std::vector<std::uint8_t> energized;        // per terminal
  std::vector<std::vector<cplx>> from_power;  // per line, per line phase, pu; empty for open lines
  std::vector<std::vector<cplx>> to_power;
  bool all_line_flows = false;
  std::vector<double> load_p;  // consumed kW per slot (0 when de-energized)
  std::vector<double> load_q;
  bool converged = false;
  std::size_t iterations = 0;
  double max_residual = 0.0;
  double max_update = 0.0;
};

class PowerFlowSolver {
 public:
  explicit PowerFlowSolver(std::shared_ptr<const Network> net, PowerFlowOptions opts = {})
      : net_(std::move(net)), opts_(opts) {
    setup();
  }
  explicit PowerFlowSolver(const Network& net, PowerFlowOptions opts = {})
      : PowerFlowSolver(std::make_shared<const Network>(net), opts) {}

  const Network& network() const { return *net_; }
  const PowerFlowOptions& options() const { return opts_; }
  const SymbolicLdlt& symbolic() const { return symbolic_; }

  /// Source terminal voltage (balanced set at source_vpu).
  cplx source_voltage(Phase p) const {
    const double ang = -2.0 * std::numbers::pi / 3.0 * static_cast<int>(p);
    return std::polar(net_->base().source_vpu, ang);
  }

  PowerFlowSolution solve(const SwitchVector& b, const InjectionState& s) const {
    const Network& net = *net_;
    check_switch_length(net, b);
    if (s.p.size() != net.slot_count() || s.q.size() != net.slot_count())
      throw ConfigError("injection state has " + std::to_string(s.p.size()) + " slots, network has " +
                        std::to_string(net.slot_count()));

    const auto nt = net.terminal_count();
    const auto nr = term_at_.size();
    PowerFlowSolution sol;
    sol.energized = energized_terminals(net, b);
    const auto& on = sol.energized;

    // Per-thread scratch: one solver is shared by all evaluation threads.
    // Everything below lives in the factorization's permuted order.
    thread_local Workspace ws;
    auto& values = ws.values;
    values.assign(symbolic_.nonzeros(), cplx(0));
    auto& src_current = ws.src_current;  // Y_ns V_s
    src_current.assign(nr, cplx(0));
    for (std::size_t l = 0; l < net.line_count(); ++l) {
      if (!line_active(net, b, l)) continue;
      for (const auto& e : entries_[l]) {
        if (!on[e.row] || !on[e.col]) continue;
        if (e.slot >= 0) values[static_cast<std::size_t>(e.slot)] += e.value;
        else src_current[static_cast<std::size_t>(pos_[e.row])] += e.value * source_v_[e.col];
      }
    }
    auto& factor = ws.factor;
    factor.active.resize(nr);
    for (std::size_t r = 0; r < nr; ++r) factor.active[r] = on[term_at_[r]];
    const auto& live = factor.active;
    if (!symbolic_.factorize_permuted(values, factor))
      throw StructuralError("singular reduced admittance matrix (energized terminal without a path to the source)");

    // Constant-power demand per reduced terminal, pu (consumption positive).
    auto& demand = ws.demand;
    demand.assign(nr, cplx(0));
    const double sb = net.s_base_phase();
    for (std::size_t k = 0; k < net.slot_count(); ++k) {
      const auto t = net.load_slots()[k].terminal;
      if (on[t]) demand[static_cast<std::size_t>(pos_[t])] += cplx(s.p[k], s.q[k]) / sb;
    }

    auto& v = ws.v;
    auto& current = ws.current;
    auto& next = ws.next;
    v.resize(nr);
    current.resize(nr);
    next.resize(nr);
    // -conj(S / V) = -conj(S) V / |V|^2
    auto load_current = [&](std::size_t r, cplx x) {
      const cplx d = demand[r];
      const double m = std::norm(x);
      if ((d.real() == 0.0 && d.imag() == 0.0) || m == 0.0) return cplx(0);
      return cplx(-(d.real() * x.real() + d.imag() * x.imag()) / m, (d.imag() * x.real() - d.real() * x.imag()) / m);
    };
    for (std::size_t r = 0; r < nr; ++r) {
      v[r] = live[r] ? source_v_[term_at_[r]] : cplx(0);
      current[r] = live[r] ? load_current(r, v[r]) : cplx(0);
    }

    for (std::size_t it = 1; it <= opts_.max_iterations; ++it) {
      for (std::size_t r = 0; r < nr; ++r) next[r] = current[r] - src_current[r];
      symbolic_.solve_permuted(factor, next.data());
      double du = 0.0, res = 0.0;
      for (std::size_t r = 0; r < nr; ++r) {
        if (!live[r]) continue;
        du = std::max(du, std::norm(next[r] - v[r]));
        v[r] = next[r];
        const cplx c = load_current(r, v[r]);
        res = std::max(res, std::norm(c - current[r]));
        current[r] = c;
      }
      du = std::sqrt(du);
      res = std::sqrt(res);
      sol.iterations = it;
      sol.max_update = du;
      sol.max_residual = res;
      if (!std::isfinite(du) || !std::isfinite(res)) break;
      if (du < opts_.tolerance || res < opts_.tolerance) {
        sol.converged = true;
        break;
      }
    }

    sol.voltage.assign(nt, cplx(0));
    for (std::size_t t = 0; t < nt; ++t)
      if (pos_[t] < 0) sol.voltage[t] = source_v_[t];
    for (std::size_t r = 0; r < nr; ++r) sol.voltage[term_at_[r]] = live[r] ? v[r] : cplx(0);

    sol.from_power.assign(net.line_count(), {});
    sol.to_power.assign(net.line_count(), {});
    sol.all_line_flows = opts_.all_line_flows;
    for (std::size_t l = 0; l < net.line_count(); ++l) {
      if (!line_active(net, b, l) || (!opts_.all_line_flows && l != net.head_line())) continue;
      line_flow(l, sol.voltage, sol.from_power[l], sol.to_power[l]);
    }
    sol.load_p.assign(net.slot_count(), 0.0);
    sol.load_q.assign(net.slot_count(), 0.0);
    for (std::size_t k = 0; k < net.slot_count(); ++k) {
      if (!on[net.load_slots()[k].terminal]) continue;
      sol.load_p[k] = s.p[k];
      sol.load_q[k] = s.q[k];
    }
    return sol;
  }

 private:
  struct Workspace {
    std::vector<cplx> values, src_current, demand, v, current, next;
    SymbolicLdlt::Factor factor;
  };

  struct Entry {
    std::size_t row, col;
    std::ptrdiff_t slot;  // >= 0: Y_nn value slot; < 0: Y_ns coupling to source terminal `col`
    cplx value;
  };

  void setup() {
    const Network& net = *net_;
    const auto nt = net.terminal_count();
    std::vector<std::ptrdiff_t> reduced_of(nt, -1);  // terminal -> index among non-source terminals
    std::vector<std::size_t> reduced;
    source_v_.assign(nt, cplx(0));
    for (std::size_t t = 0; t < nt; ++t) {
      source_v_[t] = source_voltage(net.terminal_phase(t));
      if (net.terminal_bus(t) == net.source_bus()) continue;
      reduced_of[t] = static_cast<std::ptrdiff_t>(reduced.size());
      reduced.push_back(t);
    }

    primitives_.reserve(net.line_count());
    for (const auto& ln : net.lines()) phases_.push_back(ln.phases.phases());
    std::vector<std::pair<std::size_t, std::size_t>> pattern;
    for (std::size_t l = 0; l < net.line_count(); ++l) {
      primitives_.push_back(line_primitive_pu(net, net.lines()[l]));
      for_each_line_entry(net, l, primitives_.back(), [&](std::size_t r, std::size_t c, cplx) {
        if (reduced_of[r] >= 0 && reduced_of[c] >= 0)
          pattern.emplace_back(static_cast<std::size_t>(reduced_of[r]), static_cast<std::size_t>(reduced_of[c]));
      });
    }
    symbolic_ = SymbolicLdlt(reduced.size(), pattern);

    pos_.assign(nt, -1);
    term_at_.assign(reduced.size(), 0);
    for (std::size_t r = 0; r < reduced.size(); ++r) {
      const auto p = symbolic_.position(r);
      pos_[reduced[r]] = static_cast<std::ptrdiff_t>(p);
      term_at_[p] = reduced[r];
    }

    entries_.assign(net.line_count(), {});
    for (std::size_t l = 0; l < net.line_count(); ++l) {
      for_each_line_entry(net, l, primitives_[l], [&](std::size_t r, std::size_t c, cplx v) {
        const auto rr = reduced_of[r], rc = reduced_of[c];
        if (rr < 0) return;  // source rows are not solved for
        if (rc < 0) {
          entries_[l].push_back({r, c, -1, v});
          return;
        }
        if (rr > rc) return;  // symmetric: keep one triangle
        entries_[l].push_back({r, c, symbolic_.slot(static_cast<std::size_t>(rr), static_cast<std::size_t>(rc)), v});
      });
    }
  }

  void line_flow(std::size_t l, const std::vector<cplx>& volt, std::vector<cplx>& from, std::vector<cplx>& to) const {
    const Network& net = *net_;
    const auto& ph = phases_[l];
    const auto n = ph.size();
    const auto& prim = primitives_[l];
    cplx vf[3], vt[3];
    for (std::size_t i = 0; i < n; ++i) {
      vf[i] = volt[net.terminal(net.line_from(l), ph[i])];
      vt[i] = volt[net.terminal(net.line_to(l), ph[i])];
    }
    from.resize(n);
    to.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      cplx i_from(0), i_to(0);
      for (std::size_t j = 0; j < n; ++j) {
        const auto r = static_cast<Eigen::Index>(i), c = static_cast<Eigen::Index>(j);
        i_from += prim.from_from(r, c) * vf[j] + prim.from_to(r, c) * vt[j];
        i_to += prim.to_from(r, c) * vf[j] + prim.to_to(r, c) * vt[j];
      }
      from[i] = vf[i] * std::conj(i_from);
      to[i] = vt[i] * std::conj(i_to);
    }
  }

  std::shared_ptr<const Network> net_;
  PowerFlowOptions opts_;
  std::vector<std::ptrdiff_t> pos_;  // terminal -> position in the factorization, -1 for source terminals
  std::vector<std::size_t> term_at_;  // position -> terminal
  std::vector<cplx> source_v_;              // per terminal, balanced source set
  std::vector<LinePrimitive> primitives_;
  std::vector<std::vector<Phase>> phases_;  // per line
  SymbolicLdlt symbolic_;
  std::vector<std::vector<Entry>> entries_;
};

inline PowerFlowSolution solve(const Network& net, const SwitchVector& b, const InjectionState& s,
                               PowerFlowOptions opts = {}) {
  return PowerFlowSolver(net, opts).solve(b, s);
}

// ---------------------------------------------------------------------------
// Observables

/// Measurement vector layout: feeder-head P per phase, Q per phase, then per
/// metered load (load-id order) P per phase, Q per phase.
struct ObservableLayout {
  std::size_t head_line = 0;
  std::vector<std::size_t> metered_loads;  // ascending load indices

  std::size_t dimension(const Network& net) const {
    std::size_t d = 2 * net.lines()[head_line].phases.size();
    for (auto ld : metered_loads) d += 2 * net.loads()[ld].phases.size();
    return d;
  }
};

inline ObservableLayout layout_from_flags(const Network& net) {
  ObservableLayout lay{net.head_line(), {}};
  for (std::size_t i = 0; i < net.load_count(); ++i)
    if (net.loads()[i].metered) lay.metered_loads.push_back(i);
  return lay;
}

/// Power entering the head line at the source side, per line phase, pu.
inline const std::vector<cplx>& head_power(const PowerFlowSolution& sol, const Network& net, std::size_t head) {
  return net.line_from(head) == net.source_bus() ? sol.from_power[head] : sol.to_power[head];
}

inline void append_observables(const PowerFlowSolution& sol, const Network& net, const ObservableLayout& lay,
                               std::vector<double>& out) {
  if (!sol.converged) throw NumericalError("observables requested from an unconverged power flow");
  const double sb = net.s_base_phase();
  const auto nh = net.lines()[lay.head_line].phases.size();
  const auto& hp = head_power(sol, net, lay.head_line);
  for (std::size_t i = 0; i < nh; ++i) out.push_back(hp.empty() ? 0.0 : hp[i].real() * sb);
  for (std::size_t i = 0; i < nh; ++i) out.push_back(hp.empty() ? 0.0 : hp[i].imag() * sb);
  for (auto ld : lay.metered_loads) {
    const auto first = net.first_slot(ld), n = net.loads()[ld].phases.size();
    for (std::size_t k = 0; k < n; ++k) out.push_back(sol.load_p[first + k]);
    for (std::size_t k = 0; k < n; ++k) out.push_back(sol.load_q[first + k]);
  }
}

inline std::vector<double> observables(const PowerFlowSolution& sol, const Network& net, const ObservableLayout& lay) {
  std::vector<double> out;
  out.reserve(lay.dimension(net));
  append_observables(sol, net, lay, out);
  return out;
}

inline std::vector<double> observables(const PowerFlowSolution& sol, const Network& net) {
  return observables(sol, net, layout_from_flags(net));
}

/// Source injection, total consumption and total line losses, pu (sums over
/// phases). For a converged solve, source = load + losses.
struct PowerBalance {
  cplx source{0}, load{0}, losses{0};
};

inline PowerBalance power_balance(const PowerFlowSolution& sol, const Network& net) {
  if (!sol.all_line_flows) throw ConfigError("power balance needs a solve with all line flows");
  PowerBalance pb;
  const double sb = net.s_base_phase();
  for (std::size_t l = 0; l < net.line_count(); ++l) {
    if (sol.from_power[l].empty()) continue;
    for (std::size_t i = 0; i < sol.from_power[l].size(); ++i) {
      pb.losses += sol.from_power[l][i] + sol.to_power[l][i];
      if (net.line_from(l) == net.source_bus()) pb.source += sol.from_power[l][i];
      if (net.line_to(l) == net.source_bus()) pb.source += sol.to_power[l][i];
    }
  }
  for (std::size_t k = 0; k < net.slot_count(); ++k) pb.load += cplx(sol.load_p[k], sol.load_q[k]) / sb;
  return pb;
}

}  // namespace gridtopo
