#include <gtest/gtest.h>

#include <complex>
#include <sstream>

#include "common.hpp"

using namespace gridtopo;
using testutil::load;

namespace {

// Cofactor inverse of a 3x3 complex matrix; independent of Eigen's LU.
ComplexMatrix adjugate_inverse(const ComplexMatrix& m) {
  auto a = [&](int r, int c) { return m(r, c); };
  const cplx det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
                   a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
                   a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
  ComplexMatrix inv(3, 3);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const int r1 = (c + 1) % 3, r2 = (c + 2) % 3, c1 = (r + 1) % 3, c2 = (r + 2) % 3;
      inv(r, c) = (a(r1, c1) * a(r2, c2) - a(r1, c2) * a(r2, c1)) / det;
    }
  return inv;
}

// Dense Y over all terminals, built entry by entry from the pi model.
ComplexMatrix dense_oracle(const Network& net, const SwitchVector& b) {
  const auto n = static_cast<Eigen::Index>(net.terminal_count());
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  for (std::size_t l = 0; l < net.line_count(); ++l) {
    const auto s = net.line_switch(l);
    if (s != Network::npos && !b.closed(s)) continue;
    const Line& ln = net.lines()[l];
    const ComplexMatrix ys = ln.series_impedance.inverse() * net.z_base();
    const ComplexMatrix sh = ln.shunt_admittance * (0.5 * net.z_base());
    const auto ph = ln.phases.phases();
    for (std::size_t i = 0; i < ph.size(); ++i)
      for (std::size_t j = 0; j < ph.size(); ++j) {
        const auto fi = Eigen::Index(net.terminal(net.line_from(l), ph[i]));
        const auto ti = Eigen::Index(net.terminal(net.line_to(l), ph[i]));
        const auto fj = Eigen::Index(net.terminal(net.line_from(l), ph[j]));
        const auto tj = Eigen::Index(net.terminal(net.line_to(l), ph[j]));
        const auto ii = Eigen::Index(i), jj = Eigen::Index(j);
        y(fi, fj) += ys(ii, jj) + sh(ii, jj);
        y(ti, tj) += ys(ii, jj) + sh(ii, jj);
        y(fi, tj) -= ys(ii, jj);
        y(ti, fj) -= ys(ii, jj);
      }
  }
  return y;
}

double max_abs(const ComplexMatrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(LinePrimitive, MatchesAdjugateInverse) {
  const auto net = load("toy4.json");
  for (const auto& ln : net.lines()) {
    const auto prim = line_primitive(ln);
    const ComplexMatrix y = adjugate_inverse(ln.series_impedance);
    const double scale = max_abs(y);
    EXPECT_LT(max_abs(prim.from_to + y), 1e-12 * scale);
    EXPECT_LT(max_abs(prim.from_from - y - ln.shunt_admittance * 0.5), 1e-12 * scale);
    EXPECT_LT(max_abs(prim.to_to - prim.from_from), 1e-15 * scale);
  }
}

TEST(LinePrimitive, ScalarClosedForm) {
  const auto net = parse_feeder_json(testutil::two_bus_json(0.3, 0.4, 1.0, 0.0));
  const auto prim = line_primitive(net.lines()[0]);
  const cplx expect = 1.0 / cplx(0.3, 0.4);  // 1.2 - 1.6j
  EXPECT_NEAR(prim.from_from(0, 0).real(), 1.2, 1e-14);
  EXPECT_NEAR(prim.from_from(0, 0).imag(), -1.6, 1e-14);
  EXPECT_NEAR(std::abs(prim.from_to(0, 0) + expect), 0.0, 1e-14);
}

TEST(Assemble, Toy4MatchesDenseOracle) {
  const auto net = load("toy4.json");
  for (const char* sv : {"11", "10", "01", "00"}) {
    const auto b = SwitchVector::parse(sv);
    const ComplexMatrix dense = ComplexMatrix(assemble(net, b).matrix);
    const ComplexMatrix oracle = dense_oracle(net, b);
    EXPECT_LT(max_abs(dense - oracle), 1e-9 * max_abs(oracle)) << sv;
  }
}

TEST(Assemble, LargeFixtureMatchesDenseOracle) {
  const auto net = load("ieee123_loop2.json");
  const auto b = SwitchVector::parse("1101001001101");
  const ComplexMatrix dense = ComplexMatrix(assemble(net, b).matrix);
  const ComplexMatrix oracle = dense_oracle(net, b);
  EXPECT_LT(max_abs(dense - oracle), 1e-9 * max_abs(oracle));
}

TEST(Assemble, OpenSwitchRemovesLineBlocks) {
  const auto net = load("toy4.json");
  const auto y = assemble(net, SwitchVector::parse("01")).matrix;
  const auto l = net.switch_line(0);
  const auto f = net.terminal(net.line_from(l), Phase::a), t = net.terminal(net.line_to(l), Phase::a);
  EXPECT_EQ(y.coeff(Eigen::Index(f), Eigen::Index(t)), cplx(0));
  EXPECT_EQ(y.coeff(Eigen::Index(t), Eigen::Index(t)), cplx(0));  // n2 hangs only on the open line
}

TEST(Assemble, SymmetricNotHermitian) {
  const auto net = load("ieee123_analog.json");
  const ComplexMatrix y = ComplexMatrix(assemble(net, net.default_switches()).matrix);
  EXPECT_LT(max_abs(y - y.transpose()), 1e-12 * max_abs(y));
  EXPECT_GT(max_abs(y - y.adjoint()), 1.0);
}

TEST(Assemble, WrongSwitchLength) {
  const auto net = load("toy4.json");
  EXPECT_THROW(assemble(net, SwitchVector::parse("111")), ConfigError);
}

TEST(Assemble, CoordinateDumpIsStable) {
  const auto net = load("toy4.json");
  std::ostringstream a, b;
  dump_coordinates(assemble(net, net.default_switches()), a);
  dump_coordinates(assemble(net, net.default_switches()), b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_FALSE(a.str().empty());
}

TEST(SparseLdlt, SolvesComplexSymmetricSystem) {
  // Reduced Y of the 123 analog against a dense LU solve.
  const auto net = load("ieee123_analog.json");
  const auto y = assemble(net, net.default_switches()).matrix;
  std::vector<std::size_t> keep;
  for (std::size_t t = 0; t < net.terminal_count(); ++t)
    if (net.terminal_bus(t) != net.source_bus()) keep.push_back(t);
  const auto n = keep.size();
  const auto dn = static_cast<Eigen::Index>(n);
  ComplexMatrix dense(dn, dn);
  std::vector<std::pair<std::size_t, std::size_t>> pattern;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      dense(Eigen::Index(i), Eigen::Index(j)) = y.coeff(Eigen::Index(keep[i]), Eigen::Index(keep[j]));
      if (dense(Eigen::Index(i), Eigen::Index(j)) != cplx(0)) pattern.emplace_back(i, j);
    }
  SymbolicLdlt sym(n, pattern);
  std::vector<cplx> values(sym.nonzeros(), cplx(0));
  for (auto [i, j] : pattern)
    if (i <= j) values[std::size_t(sym.slot(i, j))] = dense(Eigen::Index(i), Eigen::Index(j));
  SymbolicLdlt::Factor f;
  ASSERT_TRUE(sym.factorize(values, f));
  std::vector<cplx> rhs(n), work;
  Eigen::VectorXcd b(dn);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = b(Eigen::Index(i)) = cplx(std::sin(double(i)), std::cos(3.0 * i));
  sym.solve(f, rhs, work);
  const Eigen::VectorXcd x = dense.fullPivLu().solve(b);
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(rhs[i] - x(Eigen::Index(i))));
  EXPECT_LT(err, 1e-9 * x.cwiseAbs().maxCoeff());
}
