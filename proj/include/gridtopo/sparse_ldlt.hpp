#pragma once

// Sparse LDL^T for complex *symmetric* (not Hermitian) matrices with a fixed
// sparsity pattern. The ordering and elimination tree are computed once per
// pattern; numeric factorization runs per value set. Up-looking algorithm
// after T. Davis' LDL. No pivoting: intended for admittance matrices whose
// Hermitian part is positive definite.
//
// An optional activity mask drops rows/columns from one factorization: an
// inactive index behaves as an identity row and costs nothing in the solves.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

namespace gridtopo {

class SymbolicLdlt {
 public:
  using Scalar = std::complex<double>;
  using Index = std::int32_t;
  static constexpr std::ptrdiff_t none = -1;

  SymbolicLdlt() = default;

  /// `entries` lists structural nonzeros (r, c) of an n x n symmetric matrix;
  /// either triangle (or both) may be given. The diagonal is always included.
  SymbolicLdlt(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& entries) : n_(n) {
    using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
    std::vector<Eigen::Triplet<double, int>> trips;
    trips.reserve(entries.size() * 2 + n);
    for (std::size_t i = 0; i < n; ++i) trips.emplace_back(int(i), int(i), 1.0);
    for (auto [r, c] : entries) {
      trips.emplace_back(int(r), int(c), 1.0);
      trips.emplace_back(int(c), int(r), 1.0);
    }
    SpMat pattern(static_cast<int>(n), static_cast<int>(n));
    pattern.setFromTriplets(trips.begin(), trips.end());
    Eigen::AMDOrdering<int>::PermutationType amd;
    Eigen::AMDOrdering<int>()(pattern, amd);
    const Eigen::AMDOrdering<int>::PermutationType inv = amd.inverse();
    perm_.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm_[i] = static_cast<Index>(inv.indices()[static_cast<int>(i)]);

    // Upper triangle of P A P^T in CSC.
    std::vector<std::vector<Index>> cols(n);
    for (int c = 0; c < pattern.outerSize(); ++c)
      for (SpMat::InnerIterator it(pattern, c); it; ++it) {
        const auto pr = perm_[static_cast<std::size_t>(it.row())], pc = perm_[static_cast<std::size_t>(c)];
        if (pr <= pc) cols[static_cast<std::size_t>(pc)].push_back(pr);
      }
    ap_.assign(n + 1, 0);
    for (std::size_t k = 0; k < n; ++k) {
      std::sort(cols[k].begin(), cols[k].end());
      ap_[k + 1] = ap_[k] + cols[k].size();
      ai_.insert(ai_.end(), cols[k].begin(), cols[k].end());
    }

    // Elimination tree and column counts.
    parent_.assign(n, -1);
    std::vector<std::size_t> lnz(n, 0);
    std::vector<Index> flag(n, -1);
    for (std::size_t k = 0; k < n; ++k) {
      const auto kk = static_cast<Index>(k);
      flag[k] = kk;
      for (std::size_t p = ap_[k]; p < ap_[k + 1]; ++p) {
        auto i = ai_[p];
        if (i >= kk) continue;
        while (flag[static_cast<std::size_t>(i)] != kk) {
          const auto ui = static_cast<std::size_t>(i);
          if (parent_[ui] == -1) parent_[ui] = kk;
          ++lnz[ui];
          flag[ui] = kk;
          i = parent_[ui];
        }
      }
    }
    lp_.assign(n + 1, 0);
    for (std::size_t k = 0; k < n; ++k) lp_[k + 1] = lp_[k] + lnz[k];
  }

  std::size_t size() const { return n_; }
  std::size_t nonzeros() const { return ai_.size(); }
  std::size_t factor_nonzeros() const { return lp_.empty() ? 0 : lp_.back(); }

  /// Position of original entry (r, c) in the value array passed to
  /// factorize(), or none when it is not part of the pattern.
  std::ptrdiff_t slot(std::size_t r, std::size_t c) const {
    auto pr = perm_[r], pc = perm_[c];
    if (pr > pc) std::swap(pr, pc);
    const auto first = ai_.begin() + static_cast<std::ptrdiff_t>(ap_[static_cast<std::size_t>(pc)]);
    const auto last = ai_.begin() + static_cast<std::ptrdiff_t>(ap_[static_cast<std::size_t>(pc) + 1]);
    const auto it = std::lower_bound(first, last, pr);
    if (it == last || *it != pr) return none;
    return it - ai_.begin();
  }

  struct Factor {
    std::vector<Index> li;
    std::vector<Scalar> lx;
    std::vector<std::size_t> cnt;  // stored entries per column
    std::vector<Scalar> dinv;
    std::vector<std::uint8_t> active;  // permuted order
    // scratch
    std::vector<Scalar> y;
    std::vector<Index> pattern, flag;
  };

  /// Permuted position of original index i.
  std::size_t position(std::size_t i) const { return static_cast<std::size_t>(perm_[i]); }

  /// Numeric factorization of every index. Returns false on a zero pivot.
  bool factorize(const std::vector<Scalar>& values, Factor& f) const {
    f.active.assign(n_, 1);
    return factorize_permuted(values, f);
  }

  /// `active` (original ordering) marks the indices kept; values coupling to
  /// an inactive index are ignored.
  bool factorize(const std::vector<Scalar>& values, const std::vector<std::uint8_t>& active, Factor& f) const {
    f.active.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) f.active[static_cast<std::size_t>(perm_[i])] = active[i] ? 1 : 0;
    return factorize_permuted(values, f);
  }

  /// Factorization with the mask already stored in f.active, permuted order.
  bool factorize_permuted(const std::vector<Scalar>& values, Factor& f) const {
    const auto n = n_;
    f.li.resize(factor_nonzeros());
    f.lx.resize(factor_nonzeros());
    f.cnt.assign(n, 0);
    f.dinv.resize(n);
    f.y.resize(n);  // left all-zero by every factorization
    f.pattern.resize(n);
    f.flag.assign(n, -1);
    Scalar* y = f.y.data();
    Index* pattern = f.pattern.data();
    Index* flag = f.flag.data();
    const std::uint8_t* on = f.active.data();

    for (std::size_t k = 0; k < n; ++k) {
      const auto kk = static_cast<Index>(k);
      if (!on[k]) {
        f.dinv[k] = Scalar(1);
        continue;
      }
      std::size_t top = n;
      flag[k] = kk;
      for (std::size_t p = ap_[k]; p < ap_[k + 1]; ++p) {
        auto i = ai_[p];
        if (!on[static_cast<std::size_t>(i)]) continue;
        y[i] += values[p];
        std::size_t len = 0;
        while (flag[i] != kk) {
          if (on[static_cast<std::size_t>(i)]) pattern[len++] = i;
          flag[i] = kk;
          i = parent_[static_cast<std::size_t>(i)];
        }
        while (len > 0) pattern[--top] = pattern[--len];
      }
      Scalar dk = y[k];
      y[k] = Scalar(0);
      for (; top < n; ++top) {
        const auto i = static_cast<std::size_t>(pattern[top]);
        const Scalar yi = y[i];
        y[i] = Scalar(0);
        const auto p1 = lp_[i], p2 = lp_[i] + f.cnt[i];
        for (auto p = p1; p < p2; ++p) y[f.li[p]] -= mul(f.lx[p], yi);
        const Scalar lki = mul(yi, f.dinv[i]);
        dk -= mul(lki, yi);
        f.li[p2] = kk;
        f.lx[p2] = lki;
        ++f.cnt[i];
      }
      if (dk == Scalar(0) || !std::isfinite(dk.real()) || !std::isfinite(dk.imag())) {
        std::fill(f.y.begin(), f.y.end(), Scalar(0));
        return false;
      }
      const double m = std::norm(dk);
      f.dinv[k] = Scalar(dk.real() / m, -dk.imag() / m);
    }
    return true;
  }

  /// Solves A x = b in place (b given and returned in original ordering).
  /// Inactive entries come back as zero.
  void solve(const Factor& f, std::vector<Scalar>& b, std::vector<Scalar>& work) const {
    const auto n = n_;
    work.resize(n);
    for (std::size_t i = 0; i < n; ++i) work[static_cast<std::size_t>(perm_[i])] = b[i];
    solve_permuted(f, work.data());
    for (std::size_t i = 0; i < n; ++i) b[i] = work[static_cast<std::size_t>(perm_[i])];
  }

  /// In-place solve on a right-hand side already in permuted order.
  void solve_permuted(const Factor& f, Scalar* w) const {
    const auto n = n_;
    const std::uint8_t* on = f.active.data();
    const Index* li = f.li.data();
    const Scalar* lx = f.lx.data();
    for (std::size_t j = 0; j < n; ++j) {
      if (!on[j]) {
        w[j] = Scalar(0);
        continue;
      }
      const Scalar xj = w[j];
      const auto p1 = lp_[j], p2 = lp_[j] + f.cnt[j];
      for (auto p = p1; p < p2; ++p) w[li[p]] -= mul(lx[p], xj);
      w[j] = mul(xj, f.dinv[j]);
    }
    for (std::size_t j = n; j-- > 0;) {
      if (!on[j]) continue;
      Scalar acc = w[j];
      const auto p1 = lp_[j], p2 = lp_[j] + f.cnt[j];
      for (auto p = p1; p < p2; ++p) acc -= mul(lx[p], w[li[p]]);
      w[j] = acc;
    }
  }

 private:
  // Plain product; skips the C99 inf/nan recovery path of operator*.
  static Scalar mul(Scalar a, Scalar b) {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
  }

  std::size_t n_ = 0;
  std::vector<Index> perm_;  // original index -> permuted index
  std::vector<std::size_t> ap_;
  std::vector<Index> ai_;
  std::vector<Index> parent_;
  std::vector<std::size_t> lp_;
};

}  // namespace gridtopo
