#pragma once

// Three-phase feeder data model: buses, switched lines, loads, plus the JSON
// feeder schema and the switch-vector driven connectivity queries.

#include <algorithm>
#include <array>
#include <bit>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gridtopo/error.hpp"

namespace gridtopo {

using cplx = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

enum class Phase : std::uint8_t { a = 0, b = 1, c = 2 };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::a, Phase::b, Phase::c};

inline char phase_char(Phase p) { return static_cast<char>('a' + static_cast<int>(p)); }

/// Non-empty subset of {a, b, c}.
class PhaseSet {
 public:
  PhaseSet() = default;

  static PhaseSet parse(std::string_view text) {
    PhaseSet s;
    for (char ch : text) {
      if (ch < 'a' || ch > 'c') throw ConfigError("invalid phase letter '" + std::string(1, ch) + "'");
      const auto bit = static_cast<std::uint8_t>(1u << (ch - 'a'));
      if (s.bits_ & bit) throw ConfigError("repeated phase letter '" + std::string(1, ch) + "'");
      s.bits_ |= bit;
    }
    if (s.bits_ == 0) throw ConfigError("empty phase set");
    return s;
  }

  bool contains(Phase p) const { return (bits_ >> static_cast<int>(p)) & 1u; }
  std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  bool empty() const { return bits_ == 0; }
  bool subset_of(PhaseSet other) const { return (bits_ & ~other.bits_) == 0; }

  std::vector<Phase> phases() const {
    std::vector<Phase> out;
    for (Phase p : kAllPhases)
      if (contains(p)) out.push_back(p);
    return out;
  }

  /// Position of `p` within this set (0-based), or npos.
  std::size_t position(Phase p) const {
    if (!contains(p)) return npos;
    return static_cast<std::size_t>(std::popcount(static_cast<unsigned>(bits_ & ((1u << static_cast<int>(p)) - 1u))));
  }

  std::string str() const {
    std::string s;
    for (Phase p : phases()) s.push_back(phase_char(p));
    return s;
  }

  friend bool operator==(PhaseSet, PhaseSet) = default;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::uint8_t bits_ = 0;
};

enum class BusKind { source, junction, load };

struct Bus {
  std::string id;
  PhaseSet phases;
  BusKind kind = BusKind::junction;
  friend bool operator==(const Bus&, const Bus&) = default;
};

struct Line {
  std::string id;
  std::string from_bus;
  std::string to_bus;
  PhaseSet phases;
  ComplexMatrix series_impedance;  // ohms
  ComplexMatrix shunt_admittance;  // siemens, total (split half per end)
  std::optional<std::string> switch_id;
};

enum class SwitchStatus { open, closed };

struct Switch {
  std::string id;
  std::size_t index = 0;
  std::string line_id;
  SwitchStatus default_status = SwitchStatus::closed;
  friend bool operator==(const Switch&, const Switch&) = default;
};

struct Load {
  std::string id;
  std::string bus_id;
  PhaseSet phases;
  std::vector<double> nominal_p;  // kW per phase, aligned with phases
  std::vector<double> nominal_q;  // kvar per phase
  bool metered = false;
  friend bool operator==(const Load&, const Load&) = default;
};

struct BaseQuantities {
  double kv = 0.0;   // line-to-line
  double kva = 0.0;  // three-phase
  std::string source_bus;
  double source_vpu = 1.0;
  friend bool operator==(const BaseQuantities&, const BaseQuantities&) = default;
};

inline bool matrices_equal(const ComplexMatrix& a, const ComplexMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

inline bool operator==(const Line& x, const Line& y) {
  return x.id == y.id && x.from_bus == y.from_bus && x.to_bus == y.to_bus && x.phases == y.phases &&
         matrices_equal(x.series_impedance, y.series_impedance) &&
         matrices_equal(x.shunt_admittance, y.shunt_admittance) && x.switch_id == y.switch_id;
}

/// Raw feeder description prior to validation.
struct FeederData {
  BaseQuantities base;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Switch> switches;
  std::vector<Load> loads;
  friend bool operator==(const FeederData&, const FeederData&) = default;
};

/// Switch statuses, true = closed.
class SwitchVector {
 public:
  SwitchVector() = default;
  explicit SwitchVector(std::size_t n, bool closed = true) : bits_(n, closed ? 1 : 0) {}
  explicit SwitchVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto& b : bits_) b = b ? 1 : 0;
  }

  /// Parses "1101..." (optionally with commas/spaces).
  static SwitchVector parse(std::string_view text) {
    std::vector<std::uint8_t> bits;
    for (char ch : text) {
      if (ch == '0' || ch == '1') bits.push_back(static_cast<std::uint8_t>(ch - '0'));
      else if (ch == ',' || ch == ' ' || ch == '[' || ch == ']') continue;
      else throw ConfigError("invalid switch vector character '" + std::string(1, ch) + "'");
    }
    return SwitchVector(std::move(bits));
  }

  std::size_t size() const { return bits_.size(); }
  bool closed(std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool closed) { bits_[i] = closed ? 1 : 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  std::string str() const {
    std::string s;
    for (auto b : bits_) s.push_back(b ? '1' : '0');
    return s;
  }

  friend bool operator==(const SwitchVector&, const SwitchVector&) = default;
  friend auto operator<=>(const SwitchVector&, const SwitchVector&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// One (load, phase) pair; the unit of the continuous inference state.
struct LoadSlot {
  std::size_t load = 0;
  Phase phase = Phase::a;
  std::size_t terminal = 0;
};

/// Validated, immutable feeder. Collections are stored sorted by id
/// (switches by index), which fixes every downstream ordering.
class Network {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  static Network build(FeederData data) {
    Network net;
    net.data_ = std::move(data);
    net.validate_and_index();
    return net;
  }

  const FeederData& data() const { return data_; }
  const BaseQuantities& base() const { return data_.base; }
  const std::vector<Bus>& buses() const { return data_.buses; }
  const std::vector<Line>& lines() const { return data_.lines; }
  const std::vector<Switch>& switches() const { return data_.switches; }
  const std::vector<Load>& loads() const { return data_.loads; }

  std::size_t bus_count() const { return data_.buses.size(); }
  std::size_t line_count() const { return data_.lines.size(); }
  std::size_t switch_count() const { return data_.switches.size(); }
  std::size_t load_count() const { return data_.loads.size(); }

  std::size_t bus_index(const std::string& id) const { return lookup(bus_idx_, id); }
  std::size_t line_index(const std::string& id) const { return lookup(line_idx_, id); }
  std::size_t load_index(const std::string& id) const { return lookup(load_idx_, id); }

  std::size_t source_bus() const { return source_; }
  std::size_t line_from(std::size_t l) const { return line_ends_[l].first; }
  std::size_t line_to(std::size_t l) const { return line_ends_[l].second; }
  /// Switch index of line `l`, or npos for a fixed line.
  std::size_t line_switch(std::size_t l) const { return line_switch_[l]; }
  /// Line index carrying switch `s`.
  std::size_t switch_line(std::size_t s) const { return switch_line_[s]; }
  std::size_t load_bus(std::size_t ld) const { return load_bus_[ld]; }
  const std::vector<std::size_t>& incident_lines(std::size_t bus) const { return incident_[bus]; }

  /// Line whose flow is metered at the feeder head: the first line (by id)
  /// leaving the source bus.
  std::size_t head_line() const { return head_line_; }

  // Terminal numbering: buses in id order, phases a, b, c within a bus.
  std::size_t terminal_count() const { return terminal_count_; }
  std::size_t terminal(std::size_t bus, Phase p) const {
    const auto pos = data_.buses[bus].phases.position(p);
    return pos == PhaseSet::npos ? npos : terminal_offset_[bus] + pos;
  }
  std::size_t terminal_bus(std::size_t t) const { return terminal_bus_[t]; }
  Phase terminal_phase(std::size_t t) const { return terminal_phase_[t]; }

  /// Load slots in load-id order, phases a, b, c within a load.
  const std::vector<LoadSlot>& load_slots() const { return slots_; }
  std::size_t slot_count() const { return slots_.size(); }
  std::size_t first_slot(std::size_t ld) const { return load_first_slot_[ld]; }

  /// Impedance base in ohms (per-phase quantities on a three-phase base).
  double z_base() const { return data_.base.kv * data_.base.kv * 1000.0 / data_.base.kva; }
  /// Per-phase power base in kVA.
  double s_base_phase() const { return data_.base.kva / 3.0; }

  SwitchVector default_switches() const {
    SwitchVector b(switch_count());
    for (const auto& sw : data_.switches) b.set(sw.index, sw.default_status == SwitchStatus::closed);
    return b;
  }

  friend bool operator==(const Network& x, const Network& y) { return x.data_ == y.data_; }

 private:
  using Index = std::map<std::string, std::size_t, std::less<>>;

  static std::size_t lookup(const Index& idx, const std::string& id) {
    auto it = idx.find(id);
    return it == idx.end() ? npos : it->second;
  }

  template <class T>
  static Index index_unique(const std::vector<T>& items, const char* what) {
    Index idx;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].id.empty()) throw ConfigError(std::string(what) + "[" + std::to_string(i) + "]: empty id");
      if (!idx.emplace(items[i].id, i).second)
        throw ConfigError(std::string("duplicate ") + what + " id '" + items[i].id + "'");
    }
    return idx;
  }

  static void check_matrix(const ComplexMatrix& m, std::size_t n, const std::string& where) {
    if (static_cast<std::size_t>(m.rows()) != n || static_cast<std::size_t>(m.cols()) != n)
      throw ConfigError(where + ": expected " + std::to_string(n) + "x" + std::to_string(n) + " matrix");
    const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw ConfigError(where + ": matrix is not symmetric");
  }

  void validate_and_index() {
    auto by_id = [](const auto& x, const auto& y) { return x.id < y.id; };
    std::sort(data_.buses.begin(), data_.buses.end(), by_id);
    std::sort(data_.lines.begin(), data_.lines.end(), by_id);
    std::sort(data_.loads.begin(), data_.loads.end(), by_id);
    std::sort(data_.switches.begin(), data_.switches.end(),
              [](const Switch& x, const Switch& y) { return x.index < y.index; });

    const auto& base = data_.base;
    if (!(base.kv > 0.0) || !(base.kva > 0.0) || !(base.source_vpu > 0.0))
      throw ConfigError("base: kv, kva and source_vpu must be positive");

    bus_idx_ = index_unique(data_.buses, "bus");
    line_idx_ = index_unique(data_.lines, "line");
    load_idx_ = index_unique(data_.loads, "load");
    index_unique(data_.switches, "switch");

    source_ = npos;
    for (std::size_t i = 0; i < data_.buses.size(); ++i) {
      if (data_.buses[i].phases.empty()) throw ConfigError("bus '" + data_.buses[i].id + "': empty phase set");
      if (data_.buses[i].kind == BusKind::source) {
        if (source_ != npos) throw ConfigError("more than one source bus ('" + data_.buses[source_].id + "', '" +
                                               data_.buses[i].id + "')");
        source_ = i;
      }
    }
    if (source_ == npos) throw ConfigError("no source bus");
    if (data_.buses[source_].id != base.source_bus)
      throw ConfigError("base.source_bus '" + base.source_bus + "' does not name the source bus '" +
                        data_.buses[source_].id + "'");

    terminal_offset_.assign(data_.buses.size(), 0);
    terminal_count_ = 0;
    terminal_bus_.clear();
    terminal_phase_.clear();
    for (std::size_t i = 0; i < data_.buses.size(); ++i) {
      terminal_offset_[i] = terminal_count_;
      for (Phase p : data_.buses[i].phases.phases()) {
        terminal_bus_.push_back(i);
        terminal_phase_.push_back(p);
      }
      terminal_count_ += data_.buses[i].phases.size();
    }

    const std::size_t nl = data_.lines.size();
    line_ends_.resize(nl);
    line_switch_.assign(nl, npos);
    incident_.assign(data_.buses.size(), {});
    for (std::size_t l = 0; l < nl; ++l) {
      const Line& ln = data_.lines[l];
      const std::string where = "line '" + ln.id + "'";
      const auto f = bus_index(ln.from_bus), t = bus_index(ln.to_bus);
      if (f == npos) throw ConfigError(where + ": unknown from_bus '" + ln.from_bus + "'");
      if (t == npos) throw ConfigError(where + ": unknown to_bus '" + ln.to_bus + "'");
      if (f == t) throw ConfigError(where + ": from_bus equals to_bus");
      if (ln.phases.empty()) throw ConfigError(where + ": empty phase set");
      if (!ln.phases.subset_of(data_.buses[f].phases) || !ln.phases.subset_of(data_.buses[t].phases))
        throw ConfigError(where + ": phase mismatch, line phases '" + ln.phases.str() +
                          "' not a subset of endpoint bus phases");
      const auto n = ln.phases.size();
      check_matrix(ln.series_impedance, n, where + " series_impedance");
      check_matrix(ln.shunt_admittance, n, where + " shunt_admittance");
      Eigen::JacobiSVD<ComplexMatrix> svd(ln.series_impedance);
      const auto& sv = svd.singularValues();
      if (!(sv(sv.size() - 1) > 1e-12 * sv(0))) throw ConfigError(where + ": series_impedance is singular");
      line_ends_[l] = {f, t};
      incident_[f].push_back(l);
      incident_[t].push_back(l);
    }

    switch_line_.assign(data_.switches.size(), npos);
    for (std::size_t s = 0; s < data_.switches.size(); ++s) {
      const Switch& sw = data_.switches[s];
      if (sw.index != s)
        throw ConfigError("switch indices must form the contiguous range 0.." +
                          std::to_string(data_.switches.size() - 1) + " (switch '" + sw.id + "')");
      const auto l = line_index(sw.line_id);
      if (l == npos) throw ConfigError("switch '" + sw.id + "': unknown line_id '" + sw.line_id + "'");
      if (data_.lines[l].switch_id != sw.id)
        throw ConfigError("switch '" + sw.id + "': line '" + sw.line_id + "' does not reference it");
      if (line_switch_[l] != npos) throw ConfigError("line '" + sw.line_id + "' carries more than one switch");
      line_switch_[l] = s;
      switch_line_[s] = l;
    }
    for (std::size_t l = 0; l < nl; ++l)
      if (data_.lines[l].switch_id && line_switch_[l] == npos)
        throw ConfigError("line '" + data_.lines[l].id + "': unknown switch_id '" + *data_.lines[l].switch_id + "'");

    load_bus_.resize(data_.loads.size());
    load_first_slot_.resize(data_.loads.size());
    slots_.clear();
    for (std::size_t i = 0; i < data_.loads.size(); ++i) {
      const Load& ld = data_.loads[i];
      const std::string where = "load '" + ld.id + "'";
      const auto b = bus_index(ld.bus_id);
      if (b == npos) throw ConfigError(where + ": unknown bus_id '" + ld.bus_id + "'");
      if (b == source_) throw ConfigError(where + ": loads on the source bus are not supported");
      if (ld.phases.empty()) throw ConfigError(where + ": empty phase set");
      if (!ld.phases.subset_of(data_.buses[b].phases))
        throw ConfigError(where + ": phase mismatch, load phases '" + ld.phases.str() + "' not a subset of bus '" +
                          ld.bus_id + "' phases");
      if (ld.nominal_p.size() != ld.phases.size() || ld.nominal_q.size() != ld.phases.size())
        throw ConfigError(where + ": nominal_p/nominal_q must have one entry per phase");
      for (double p : ld.nominal_p)
        if (!(p >= 0.0)) throw ConfigError(where + ": nominal_p must be non-negative");
      load_bus_[i] = b;
      load_first_slot_[i] = slots_.size();
      for (Phase p : ld.phases.phases()) slots_.push_back({i, p, terminal(b, p)});
    }

    head_line_ = npos;
    for (std::size_t l = 0; l < nl && head_line_ == npos; ++l)
      if (line_ends_[l].first == source_ || line_ends_[l].second == source_) head_line_ = l;
    if (head_line_ == npos) throw ConfigError("source bus has no outgoing line");

    check_connectivity();
  }

  void check_connectivity() const {
    // Terminal-level reachability with every switch closed.
    std::vector<std::uint8_t> seen(terminal_count_, 0);
    std::vector<std::size_t> stack;
    for (Phase p : data_.buses[source_].phases.phases()) {
      seen[terminal(source_, p)] = 1;
      stack.push_back(terminal(source_, p));
    }
    while (!stack.empty()) {
      const auto t = stack.back();
      stack.pop_back();
      const auto bus = terminal_bus_[t];
      const Phase p = terminal_phase_[t];
      for (auto l : incident_[bus]) {
        if (!data_.lines[l].phases.contains(p)) continue;
        const auto other = line_ends_[l].first == bus ? line_ends_[l].second : line_ends_[l].first;
        const auto u = terminal(other, p);
        if (!seen[u]) {
          seen[u] = 1;
          stack.push_back(u);
        }
      }
    }
    for (std::size_t b = 0; b < data_.buses.size(); ++b) {
      bool any = false;
      for (Phase p : data_.buses[b].phases.phases()) any = any || seen[terminal(b, p)];
      if (!any) throw ConfigError("bus '" + data_.buses[b].id + "' is not connected to the source with all switches closed");
    }
    for (const auto& slot : slots_)
      if (!seen[slot.terminal])
        throw ConfigError("load '" + data_.loads[slot.load].id + "' phase " + phase_char(slot.phase) +
                          " is not reachable from the source with all switches closed");
  }

  FeederData data_;
  Index bus_idx_, line_idx_, load_idx_;
  std::size_t source_ = npos;
  std::size_t head_line_ = npos;
  std::vector<std::pair<std::size_t, std::size_t>> line_ends_;
  std::vector<std::size_t> line_switch_;
  std::vector<std::size_t> switch_line_;
  std::vector<std::vector<std::size_t>> incident_;
  std::vector<std::size_t> terminal_offset_;
  std::size_t terminal_count_ = 0;
  std::vector<std::size_t> terminal_bus_;
  std::vector<Phase> terminal_phase_;
  std::vector<std::size_t> load_bus_;
  std::vector<std::size_t> load_first_slot_;
  std::vector<LoadSlot> slots_;
};

// ---------------------------------------------------------------------------
// Topology queries

inline void check_switch_length(const Network& net, const SwitchVector& b) {
  if (b.size() != net.switch_count())
    throw ConfigError("switch vector length " + std::to_string(b.size()) + " does not match switch count " +
                      std::to_string(net.switch_count()));
}

/// True when line `l` conducts under `b`.
inline bool line_active(const Network& net, const SwitchVector& b, std::size_t l) {
  const auto s = net.line_switch(l);
  return s == Network::npos || b.closed(s);
}

/// Bus graph restricted to conducting lines. The vertex set is always the
/// full bus set.
struct TopologyGraph {
  std::size_t bus_count = 0;
  std::vector<std::size_t> active_lines;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency;  // (neighbour, line)

  /// Component label per bus; labels are assigned in bus order.
  std::vector<std::size_t> components() const {
    std::vector<std::size_t> label(bus_count, Network::npos);
    std::size_t next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t root = 0; root < bus_count; ++root) {
      if (label[root] != Network::npos) continue;
      label[root] = next;
      stack.push_back(root);
      while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        for (auto [v, l] : adjacency[u]) {
          if (label[v] == Network::npos) {
            label[v] = next;
            stack.push_back(v);
          }
        }
      }
      ++next;
    }
    return label;
  }

  std::size_t component_count() const {
    const auto lab = components();
    return lab.empty() ? 0 : *std::max_element(lab.begin(), lab.end()) + 1;
  }
};

inline TopologyGraph active_topology(const Network& net, const SwitchVector& b) {
  check_switch_length(net, b);
  TopologyGraph g;
  g.bus_count = net.bus_count();
  g.adjacency.resize(g.bus_count);
  for (std::size_t l = 0; l < net.line_count(); ++l) {
    if (!line_active(net, b, l)) continue;
    g.active_lines.push_back(l);
    g.adjacency[net.line_from(l)].emplace_back(net.line_to(l), l);
    g.adjacency[net.line_to(l)].emplace_back(net.line_from(l), l);
  }
  return g;
}

/// Per-bus flag: bus lies in the source's component of the active topology.
inline std::vector<std::uint8_t> energized_buses(const Network& net, const SwitchVector& b) {
  check_switch_length(net, b);
  std::vector<std::uint8_t> on(net.bus_count(), 0);
  std::vector<std::size_t> stack{net.source_bus()};
  on[net.source_bus()] = 1;
  while (!stack.empty()) {
    const auto u = stack.back();
    stack.pop_back();
    for (auto l : net.incident_lines(u)) {
      if (!line_active(net, b, l)) continue;
      const auto v = net.line_from(l) == u ? net.line_to(l) : net.line_from(l);
      if (!on[v]) {
        on[v] = 1;
        stack.push_back(v);
      }
    }
  }
  return on;
}

inline std::set<std::string> energized_set(const Network& net, const SwitchVector& b) {
  const auto on = energized_buses(net, b);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < on.size(); ++i)
    if (on[i]) ids.insert(net.buses()[i].id);
  return ids;
}

/// Per-terminal flag: terminal reachable from a source terminal through
/// conducting line phases. Finer than bus energization: a three-phase bus fed
/// only by a single-phase tie has one live terminal.
inline std::vector<std::uint8_t> energized_terminals(const Network& net, const SwitchVector& b) {
  check_switch_length(net, b);
  std::vector<std::uint8_t> on(net.terminal_count(), 0);
  std::vector<std::size_t> stack;
  const auto src = net.source_bus();
  for (Phase p : net.buses()[src].phases.phases()) {
    on[net.terminal(src, p)] = 1;
    stack.push_back(net.terminal(src, p));
  }
  while (!stack.empty()) {
    const auto t = stack.back();
    stack.pop_back();
    const auto bus = net.terminal_bus(t);
    const Phase p = net.terminal_phase(t);
    for (auto l : net.incident_lines(bus)) {
      if (!line_active(net, b, l) || !net.lines()[l].phases.contains(p)) continue;
      const auto other = net.line_from(l) == bus ? net.line_to(l) : net.line_from(l);
      const auto u = net.terminal(other, p);
      if (!on[u]) {
        on[u] = 1;
        stack.push_back(u);
      }
    }
  }
  return on;
}

// ---------------------------------------------------------------------------
// JSON feeder schema

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  return j.at(key);
}

template <class T>
T get_as(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto& v = require(j, key, where);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline ComplexMatrix matrix_from_json(const nlohmann::json& j, std::size_t n, const std::string& where) {
  if (!j.is_array() || j.size() != n * n)
    throw ConfigError(where + ": expected " + std::to_string(n * n) + " [re, im] pairs");
  ComplexMatrix m(n, n);
  for (std::size_t k = 0; k < n * n; ++k) {
    const auto& e = j[k];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw ConfigError(where + "[" + std::to_string(k) + "]: expected [re, im]");
    m(k / n, k % n) = cplx(e[0].get<double>(), e[1].get<double>());
  }
  return m;
}

inline nlohmann::json matrix_to_json(const ComplexMatrix& m) {
  auto out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back({m(r, c).real(), m(r, c).imag()});
  return out;
}

inline PhaseSet phases_from_json(const nlohmann::json& j, const std::string& where) {
  const auto s = get_as<std::string>(j, "phases", where);
  try {
    return PhaseSet::parse(s);
  } catch (const ConfigError& e) {
    throw ConfigError(where + ".phases: " + e.what());
  }
}

inline const nlohmann::json& array_field(const nlohmann::json& j, const char* key) {
  const auto& v = require(j, key, "feeder");
  if (!v.is_array()) throw ConfigError(std::string("feeder.") + key + ": expected array");
  return v;
}

}  // namespace detail

inline FeederData feeder_from_json(const nlohmann::json& j) {
  using namespace detail;
  FeederData d;
  const auto& base = require(j, "base", "feeder");
  d.base.kv = get_as<double>(base, "kv", "base");
  d.base.kva = get_as<double>(base, "kva", "base");
  d.base.source_bus = get_as<std::string>(base, "source_bus", "base");
  d.base.source_vpu = get_as<double>(base, "source_vpu", "base");

  const auto& buses = array_field(j, "buses");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const std::string where = "buses[" + std::to_string(i) + "]";
    Bus b;
    b.id = get_as<std::string>(buses[i], "id", where);
    b.phases = phases_from_json(buses[i], where);
    const auto kind = get_as<std::string>(buses[i], "kind", where);
    if (kind == "source") b.kind = BusKind::source;
    else if (kind == "junction") b.kind = BusKind::junction;
    else if (kind == "load") b.kind = BusKind::load;
    else throw ConfigError(where + ".kind: expected source|junction|load, got '" + kind + "'");
    d.buses.push_back(std::move(b));
  }

  const auto& lines = array_field(j, "lines");
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string where = "lines[" + std::to_string(i) + "]";
    Line ln;
    ln.id = get_as<std::string>(lines[i], "id", where);
    ln.from_bus = get_as<std::string>(lines[i], "from_bus", where);
    ln.to_bus = get_as<std::string>(lines[i], "to_bus", where);
    ln.phases = phases_from_json(lines[i], where);
    const auto n = ln.phases.size();
    ln.series_impedance = matrix_from_json(require(lines[i], "series_impedance", where), n, where + ".series_impedance");
    if (lines[i].contains("shunt_admittance") && !lines[i]["shunt_admittance"].is_null())
      ln.shunt_admittance = matrix_from_json(lines[i]["shunt_admittance"], n, where + ".shunt_admittance");
    else
      ln.shunt_admittance = ComplexMatrix::Zero(n, n);
    if (lines[i].contains("switch_id") && !lines[i]["switch_id"].is_null())
      ln.switch_id = get_as<std::string>(lines[i], "switch_id", where);
    d.lines.push_back(std::move(ln));
  }

  const auto& switches = array_field(j, "switches");
  for (std::size_t i = 0; i < switches.size(); ++i) {
    const std::string where = "switches[" + std::to_string(i) + "]";
    Switch sw;
    sw.id = get_as<std::string>(switches[i], "id", where);
    const auto idx = get_as<long long>(switches[i], "index", where);
    if (idx < 0) throw ConfigError(where + ".index: must be non-negative");
    sw.index = static_cast<std::size_t>(idx);
    sw.line_id = get_as<std::string>(switches[i], "line_id", where);
    const auto st = get_as<std::string>(switches[i], "default_status", where);
    if (st == "open") sw.default_status = SwitchStatus::open;
    else if (st == "closed") sw.default_status = SwitchStatus::closed;
    else throw ConfigError(where + ".default_status: expected open|closed");
    d.switches.push_back(std::move(sw));
  }

  const auto& loads = array_field(j, "loads");
  for (std::size_t i = 0; i < loads.size(); ++i) {
    const std::string where = "loads[" + std::to_string(i) + "]";
    Load ld;
    ld.id = get_as<std::string>(loads[i], "id", where);
    ld.bus_id = get_as<std::string>(loads[i], "bus_id", where);
    ld.phases = phases_from_json(loads[i], where);
    ld.nominal_p = get_as<std::vector<double>>(loads[i], "nominal_p", where);
    ld.nominal_q = get_as<std::vector<double>>(loads[i], "nominal_q", where);
    ld.metered = loads[i].value("metered", false);
    d.loads.push_back(std::move(ld));
  }
  return d;
}

inline nlohmann::json feeder_to_json(const FeederData& d) {
  nlohmann::json j;
  j["base"] = {{"kv", d.base.kv}, {"kva", d.base.kva}, {"source_bus", d.base.source_bus},
               {"source_vpu", d.base.source_vpu}};
  j["buses"] = nlohmann::json::array();
  for (const auto& b : d.buses) {
    const char* kind = b.kind == BusKind::source ? "source" : b.kind == BusKind::load ? "load" : "junction";
    j["buses"].push_back({{"id", b.id}, {"phases", b.phases.str()}, {"kind", kind}});
  }
  j["lines"] = nlohmann::json::array();
  for (const auto& l : d.lines) {
    nlohmann::json e{{"id", l.id},
                     {"from_bus", l.from_bus},
                     {"to_bus", l.to_bus},
                     {"phases", l.phases.str()},
                     {"series_impedance", detail::matrix_to_json(l.series_impedance)},
                     {"shunt_admittance", detail::matrix_to_json(l.shunt_admittance)}};
    if (l.switch_id) e["switch_id"] = *l.switch_id;
    j["lines"].push_back(std::move(e));
  }
  j["switches"] = nlohmann::json::array();
  for (const auto& s : d.switches)
    j["switches"].push_back({{"id", s.id},
                             {"index", s.index},
                             {"line_id", s.line_id},
                             {"default_status", s.default_status == SwitchStatus::open ? "open" : "closed"}});
  j["loads"] = nlohmann::json::array();
  for (const auto& ld : d.loads)
    j["loads"].push_back({{"id", ld.id},
                          {"bus_id", ld.bus_id},
                          {"phases", ld.phases.str()},
                          {"nominal_p", ld.nominal_p},
                          {"nominal_q", ld.nominal_q},
                          {"metered", ld.metered}});
  return j;
}

inline Network parse_feeder_json(const nlohmann::json& j) { return Network::build(feeder_from_json(j)); }

inline Network parse_feeder_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("feeder: invalid JSON: ") + e.what());
  }
  return parse_feeder_json(j);
}

inline Network parse_feeder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open feeder file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_feeder_string(ss.str());
}

inline std::string serialize_feeder(const Network& net) { return feeder_to_json(net.data()).dump(2); }

}  // namespace gridtopo
