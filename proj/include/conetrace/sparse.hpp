#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "conetrace/errors.hpp"

namespace conetrace {

// Compressed sparse row matrix built from triplets.  The 2D solvers assemble
// symmetric positive definite stencil operators into this form and solve with
// Jacobi-preconditioned conjugate gradients; that keeps memory linear in the
// number of unknowns even for long cylinders.
class CsrMatrix {
public:
  CsrMatrix() = default;

  static CsrMatrix from_triplets(int n, std::vector<int> ti, std::vector<int> tj,
                                 std::vector<double> tv) {
    CsrMatrix m;
    m.n_ = n;
    const std::size_t nnz_in = tv.size();
    std::vector<std::size_t> order(nnz_in);
    for (std::size_t k = 0; k < nnz_in; ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (ti[a] != ti[b]) return ti[a] < ti[b];
      return tj[a] < tj[b];
    });
    m.row_ptr_.assign(n + 1, 0);
    m.col_.reserve(nnz_in);
    m.val_.reserve(nnz_in);
    int prev_i = -1, prev_j = -1;
    for (std::size_t k : order) {
      const int i = ti[k], j = tj[k];
      if (i == prev_i && j == prev_j) {
        m.val_.back() += tv[k];
      } else {
        m.col_.push_back(j);
        m.val_.push_back(tv[k]);
        m.row_ptr_[i + 1] += 1;
        prev_i = i;
        prev_j = j;
      }
    }
    for (int i = 0; i < n; ++i) m.row_ptr_[i + 1] += m.row_ptr_[i];
    m.cache_diagonal();
    return m;
  }

  int size() const { return n_; }

  std::vector<double> apply(const std::vector<double>& x) const {
    std::vector<double> y(n_, 0.0);
    apply_into(x, y);
    return y;
  }

  void apply_into(const std::vector<double>& x, std::vector<double>& y) const {
    for (int i = 0; i < n_; ++i) {
      double s = 0.0;
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        s += val_[k] * x[col_[k]];
      y[i] = s;
    }
  }

  const std::vector<double>& diagonal() const { return diag_; }

  double max_asymmetry() const {
    // Only meaningful for matrices assembled to be symmetric.
    double worst = 0.0, scale = 0.0;
    for (int i = 0; i < n_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        const int j = col_[k];
        scale = std::max(scale, std::abs(val_[k]));
        if (j >= i) worst = std::max(worst, std::abs(val_[k] - entry(j, i)));
      }
    return scale > 0.0 ? worst / scale : 0.0;
  }

  // Jacobi-preconditioned CG for SPD systems.  Deterministic (no randomness);
  // relative residual tolerance on ||b - A x|| / ||b||.
  std::vector<double> solve(const std::vector<double>& b, double rel_tol = 1e-12,
                            int max_iter = 0,
                            const std::vector<double>* x0 = nullptr) const {
    if (max_iter <= 0) max_iter = std::max(200, 40 * static_cast<int>(std::sqrt(double(n_))) + 2 * n_);
    std::vector<double> x(n_, 0.0);
    if (x0) x = *x0;
    std::vector<double> r(n_), z(n_), p(n_), Ap(n_);
    apply_into(x, Ap);
    double bnorm2 = 0.0;
    for (int i = 0; i < n_; ++i) {
      r[i] = b[i] - Ap[i];
      bnorm2 += b[i] * b[i];
    }
    const double stop2 = (bnorm2 > 0.0 ? bnorm2 : 1.0) * rel_tol * rel_tol;
    double rz = 0.0;
    for (int i = 0; i < n_; ++i) {
      z[i] = r[i] / diag_[i];
      rz += r[i] * z[i];
    }
    p = z;
    double rr = 0.0;
    for (int i = 0; i < n_; ++i) rr += r[i] * r[i];
    if (rr <= stop2) return x;
    for (int it = 0; it < max_iter; ++it) {
      apply_into(p, Ap);
      double pAp = 0.0;
      for (int i = 0; i < n_; ++i) pAp += p[i] * Ap[i];
      if (!(pAp > 0.0))
        throw SingularOperator("cg: operator not positive definite");
      const double a = rz / pAp;
      rr = 0.0;
      for (int i = 0; i < n_; ++i) {
        x[i] += a * p[i];
        r[i] -= a * Ap[i];
        rr += r[i] * r[i];
      }
      if (rr <= stop2) return x;
      double rz_new = 0.0;
      for (int i = 0; i < n_; ++i) {
        z[i] = r[i] / diag_[i];
        rz_new += r[i] * z[i];
      }
      const double beta = rz_new / rz;
      rz = rz_new;
      for (int i = 0; i < n_; ++i) p[i] = z[i] + beta * p[i];
    }
    throw NoConvergence("cg: iteration cap reached");
  }

private:
  double entry(int i, int j) const {
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
      if (col_[k] == j) return val_[k];
    return 0.0;
  }

  void cache_diagonal() {
    diag_.assign(n_, 0.0);
    for (int i = 0; i < n_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        if (col_[k] == i) diag_[i] = val_[k];
    for (int i = 0; i < n_; ++i)
      if (!(std::abs(diag_[i]) > 0.0))
        throw SingularOperator("csr: zero diagonal entry");
  }

  int n_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<int> col_;
  std::vector<double> val_;
  std::vector<double> diag_;
};

// Triplet accumulator with the usual add/assemble flow.
struct TripletList {
  std::vector<int> i, j;
  std::vector<double> v;
  void add(int a, int b, double x) {
    i.push_back(a);
    j.push_back(b);
    v.push_back(x);
  }
  CsrMatrix assemble(int n) {
    return CsrMatrix::from_triplets(n, std::move(i), std::move(j), std::move(v));
  }
};

} // namespace conetrace
