#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "gridtopo/netmodel.hpp"

namespace gridtopo {

/// Pi-model blocks of one line, in the line's own phase order.
struct LinePrimitive {
  ComplexMatrix from_from, from_to, to_from, to_to;
};

/// Blocks in siemens: with y = Z^-1 and ysh = Y/2, (y+ysh, -y, -y, y+ysh).
inline LinePrimitive line_primitive(const Line& line) {
  const ComplexMatrix& z = line.series_impedance;
  Eigen::FullPivLU<ComplexMatrix> lu(z);
  if (!lu.isInvertible()) throw NumericalError("line '" + line.id + "': singular series impedance");
  const ComplexMatrix y = lu.inverse();
  const ComplexMatrix ysh = line.shunt_admittance * 0.5;
  return {y + ysh, -y, -y, y + ysh};
}

/// Same blocks expressed in per-unit on the network's impedance base.
inline LinePrimitive line_primitive_pu(const Network& net, const Line& line) {
  auto prim = line_primitive(line);
  const double zb = net.z_base();
  prim.from_from *= zb;
  prim.from_to *= zb;
  prim.to_from *= zb;
  prim.to_to *= zb;
  return prim;
}

/// Bus admittance matrix over all phase terminals (per-unit), source
/// terminals included. Row i corresponds to terminals[i].
struct AdmittanceMatrix {
  Eigen::SparseMatrix<cplx, Eigen::ColMajor> matrix;
  std::vector<std::pair<std::string, Phase>> terminals;

  std::size_t dimension() const { return terminals.size(); }
};

/// Calls fn(row_terminal, col_terminal, value) for every entry of line `l`'s
/// four blocks.
template <class Fn>
void for_each_line_entry(const Network& net, std::size_t l, const LinePrimitive& prim, Fn&& fn) {
  const Line& ln = net.lines()[l];
  const auto ph = ln.phases.phases();
  const auto f = net.line_from(l), t = net.line_to(l);
  for (std::size_t i = 0; i < ph.size(); ++i) {
    const auto fi = net.terminal(f, ph[i]), ti = net.terminal(t, ph[i]);
    for (std::size_t j = 0; j < ph.size(); ++j) {
      const auto fj = net.terminal(f, ph[j]), tj = net.terminal(t, ph[j]);
      const auto r = static_cast<Eigen::Index>(i), c = static_cast<Eigen::Index>(j);
      fn(fi, fj, prim.from_from(r, c));
      fn(fi, tj, prim.from_to(r, c));
      fn(ti, fj, prim.to_from(r, c));
      fn(ti, tj, prim.to_to(r, c));
    }
  }
}

/// Sums the primitives of every conducting line in line-id order. Open
/// switches remove their line entirely (series and shunt).
inline AdmittanceMatrix assemble(const Network& net, const SwitchVector& b) {
  check_switch_length(net, b);
  const auto n = static_cast<Eigen::Index>(net.terminal_count());
  std::vector<Eigen::Triplet<cplx>> trips;
  for (std::size_t l = 0; l < net.line_count(); ++l) {
    if (!line_active(net, b, l)) continue;
    const auto prim = line_primitive_pu(net, net.lines()[l]);
    for_each_line_entry(net, l, prim, [&](std::size_t r, std::size_t c, cplx v) {
      trips.emplace_back(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c), v);
    });
  }
  AdmittanceMatrix y;
  y.matrix.resize(n, n);
  y.matrix.setFromTriplets(trips.begin(), trips.end());
  y.matrix.makeCompressed();
  y.terminals.reserve(net.terminal_count());
  for (std::size_t t = 0; t < net.terminal_count(); ++t)
    y.terminals.emplace_back(net.buses()[net.terminal_bus(t)].id, net.terminal_phase(t));
  return y;
}

/// Coordinate text dump: one "row col re im" line per stored entry,
/// column-major order.
inline void dump_coordinates(const AdmittanceMatrix& y, std::ostream& out) {
  char buf[128];
  for (Eigen::Index c = 0; c < y.matrix.outerSize(); ++c) {
    for (Eigen::SparseMatrix<cplx>::InnerIterator it(y.matrix, c); it; ++it) {
      std::snprintf(buf, sizeof buf, "%lld %lld %.17g %.17g\n", static_cast<long long>(it.row()),
                    static_cast<long long>(it.col()), it.value().real(), it.value().imag());
      out << buf;
    }
  }
}

}  // namespace gridtopo
