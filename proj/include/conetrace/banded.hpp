#pragma once

#include <cmath>
#include <cstdlib>
#include <vector>

#include "conetrace/errors.hpp"

namespace conetrace {

// Dense band storage: 2*bandwidth + 1 diagonals, each of length n.  Entry
// (i, j) with |i - j| <= bandwidth lives in band (j - i + bandwidth).
// Assembly routines that build a symmetric matrix set `symmetric` so tests
// can verify the stored bands actually agree.
class BandedOperator {
public:
  BandedOperator() = default;
  BandedOperator(int n, int bandwidth)
      : n_(n), bw_(bandwidth),
        bands_(static_cast<std::size_t>(n) * (2 * bandwidth + 1), 0.0) {
    if (n < 1) throw ValidationError("BandedOperator: n must be positive");
    if (bandwidth < 0) throw ValidationError("BandedOperator: negative bandwidth");
  }

  int size() const { return n_; }
  int bandwidth() const { return bw_; }
  bool symmetric = false;

  double& at(int i, int j) {
    check_index(i, j);
    return bands_[static_cast<std::size_t>(i) * (2 * bw_ + 1) + (j - i + bw_)];
  }
  double at(int i, int j) const {
    check_index(i, j);
    return bands_[static_cast<std::size_t>(i) * (2 * bw_ + 1) + (j - i + bw_)];
  }
  // Zero-padded access outside the band.
  double get(int i, int j) const {
    if (j < i - bw_ || j > i + bw_ || j < 0 || j >= n_) return 0.0;
    return at(i, j);
  }

  std::vector<double> apply(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != n_)
      throw ValidationError("BandedOperator::apply: dimension mismatch");
    std::vector<double> y(n_, 0.0);
    for (int i = 0; i < n_; ++i) {
      double s = 0.0;
      const int jlo = std::max(0, i - bw_);
      const int jhi = std::min(n_ - 1, i + bw_);
      for (int j = jlo; j <= jhi; ++j) s += at(i, j) * x[j];
      y[i] = s;
    }
    return y;
  }

  std::vector<double> diagonal() const {
    std::vector<double> d(n_);
    for (int i = 0; i < n_; ++i) d[i] = at(i, i);
    return d;
  }

  // Largest relative asymmetry max |a_ij - a_ji| / scale over the band.
  double max_asymmetry() const {
    double worst = 0.0, scale = 0.0;
    for (int i = 0; i < n_; ++i) {
      const int jhi = std::min(n_ - 1, i + bw_);
      for (int j = i; j <= jhi; ++j) {
        scale = std::max(scale, std::abs(at(i, j)));
        worst = std::max(worst, std::abs(at(i, j) - get(j, i)));
      }
    }
    return scale > 0.0 ? worst / scale : 0.0;
  }

  // Direct solve; implemented for tridiagonal operators (bandwidth 1), which
  // is the only place a banded direct solve is needed.  Thomas elimination
  // without pivoting; a vanishing pivot reports SingularOperator.
  std::vector<double> solve(const std::vector<double>& rhs) const {
    if (bw_ == 0) {
      std::vector<double> x(n_);
      for (int i = 0; i < n_; ++i) {
        const double d = at(i, i);
        if (std::abs(d) < 1e-300)
          throw SingularOperator("diagonal solve: zero pivot");
        x[i] = rhs[i] / d;
      }
      return x;
    }
    if (bw_ != 1)
      throw ValidationError("BandedOperator::solve: only bandwidth <= 1 supported");
    if (static_cast<int>(rhs.size()) != n_)
      throw ValidationError("BandedOperator::solve: dimension mismatch");
    std::vector<double> c(n_, 0.0), d(n_, 0.0), x(n_, 0.0);
    double pivot = at(0, 0);
    if (std::abs(pivot) < 1e-300) throw SingularOperator("tridiagonal solve: zero pivot");
    if (n_ > 1) c[0] = at(0, 1) / pivot;
    d[0] = rhs[0] / pivot;
    for (int i = 1; i < n_; ++i) {
      const double lower = at(i, i - 1);
      pivot = at(i, i) - lower * c[i - 1];
      if (std::abs(pivot) < 1e-300) throw SingularOperator("tridiagonal solve: zero pivot");
      if (i < n_ - 1) c[i] = at(i, i + 1) / pivot;
      d[i] = (rhs[i] - lower * d[i - 1]) / pivot;
    }
    x[n_ - 1] = d[n_ - 1];
    for (int i = n_ - 2; i >= 0; --i) x[i] = d[i] - c[i] * x[i + 1];
    return x;
  }

private:
  void check_index(int i, int j) const {
    if (i < 0 || i >= n_ || j < i - bw_ || j > i + bw_ || j < 0 || j >= n_)
      throw ValidationError("BandedOperator: index outside band");
  }

  int n_ = 0;
  int bw_ = 0;
  std::vector<double> bands_;
};

inline std::vector<double> solve_tridiagonal(const BandedOperator& op,
                                             const std::vector<double>& rhs) {
  if (op.bandwidth() > 1)
    throw ValidationError("solve_tridiagonal: bandwidth exceeds 1");
  return op.solve(rhs);
}

// Cholesky factorization A = L L^T of a symmetric positive definite banded
// operator, reading only the lower triangle of A.  The 2D Newton loops factor
// once per Jacobian and then back-substitute for many right-hand sides, so
// factor and solve are split.  Storage is the lower band only: (bw + 1)
// diagonals of length n.  A non-positive pivot reports SingularOperator, which
// is how an indefinite Jacobian surfaces.
class BandedCholesky {
public:
  explicit BandedCholesky(const BandedOperator& a) : BandedCholesky(a, nullptr) {}

  // Factor A + diag(shift) without forming the shifted matrix; Newton loops
  // re-factor with a fresh absorption diagonal each iteration while A itself
  // never changes.
  BandedCholesky(const BandedOperator& a, const std::vector<double>& shift)
      : BandedCholesky(a, &shift) {}

  int size() const { return n_; }

  std::vector<double> solve(std::vector<double> b) const {
    if (static_cast<int>(b.size()) != n_)
      throw ValidationError("BandedCholesky::solve: dimension mismatch");
    for (int i = 0; i < n_; ++i) {
      double s = b[i];
      const int klo = std::max(0, i - bw_);
      for (int k = klo; k < i; ++k) s -= lat(i, k) * b[k];
      b[i] = s / lat(i, i);
    }
    for (int i = n_ - 1; i >= 0; --i) {
      double s = b[i];
      const int khi = std::min(n_ - 1, i + bw_);
      for (int k = i + 1; k <= khi; ++k) s -= lat(k, i) * b[k];
      b[i] = s / lat(i, i);
    }
    return b;
  }

private:
  BandedCholesky(const BandedOperator& a, const std::vector<double>* shift)
      : n_(a.size()), bw_(a.bandwidth()),
        l_(static_cast<std::size_t>(a.size()) * (a.bandwidth() + 1), 0.0) {
    if (shift && static_cast<int>(shift->size()) != n_)
      throw ValidationError("BandedCholesky: shift dimension mismatch");
    for (int i = 0; i < n_; ++i) {
      const int jlo = std::max(0, i - bw_);
      for (int j = jlo; j <= i; ++j) {
        double s = a.get(i, j);
        if (shift && j == i) s += (*shift)[i];
        for (int k = jlo; k < j; ++k) s -= lat(i, k) * lat(j, k);
        if (j < i) {
          lat(i, j) = s / lat(j, j);
        } else {
          if (!(s > 0.0))
            throw SingularOperator("banded Cholesky: non-positive pivot");
          lat(i, i) = std::sqrt(s);
        }
      }
    }
  }

  double& lat(int i, int j) {
    return l_[static_cast<std::size_t>(i) * (bw_ + 1) + (j - i + bw_)];
  }
  double lat(int i, int j) const {
    return l_[static_cast<std::size_t>(i) * (bw_ + 1) + (j - i + bw_)];
  }

  int n_ = 0;
  int bw_ = 0;
  std::vector<double> l_;
};

} // namespace conetrace
