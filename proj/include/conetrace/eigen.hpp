#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "conetrace/banded.hpp"
#include "conetrace/errors.hpp"
#include "conetrace/sparse.hpp"

namespace conetrace {

struct EigenResult {
  double lambda = 0.0;
  std::vector<double> vector;
  int iterations = 0;
  double residual = 0.0;
};

namespace detail {

// Shifted solves for inverse iteration.  The banded (tridiagonal) path forms
// A - sigma W and eliminates directly, so Rayleigh shifts are cheap.  The CSR
// path solves by CG and stays at shift zero: a near-singular shifted SPD
// system would stall CG, while warm starts make plain iteration fast enough.
inline std::vector<double> shifted_solve(const BandedOperator& A,
                                         const std::vector<double>& mass,
                                         double sigma,
                                         const std::vector<double>& rhs) {
  if (sigma == 0.0) return A.solve(rhs);
  BandedOperator S = A;
  for (int i = 0; i < S.size(); ++i) S.at(i, i) -= sigma * mass[i];
  return S.solve(rhs);
}

inline std::vector<double> shifted_solve(const CsrMatrix& A,
                                         const std::vector<double>& /*mass*/,
                                         double sigma,
                                         const std::vector<double>& rhs) {
  if (sigma != 0.0)
    throw ValidationError("smallest_eigenpair: shifts unsupported for CSR operators");
  return A.solve(rhs, 1e-13);
}

inline constexpr bool supports_shift(const BandedOperator*) { return true; }
inline constexpr bool supports_shift(const CsrMatrix*) { return false; }

} // namespace detail

// Smallest eigenpair of the generalized problem A v = lambda W v with W a
// positive diagonal mass.  Inverse iteration from the fixed initial shift 0,
// eigenvalue refined each sweep by the Rayleigh quotient; once the quotient
// has settled, direct-solver operators switch to a Rayleigh shift for the
// final digits.  Deterministic: the start vector is all ones unless an
// initial guess is supplied.  The residual of a second-difference operator
// bottoms out near eps * kappa(A), so the loop keeps the best iterate and
// accepts stagnation once that floor is clearly reached.  Returns the
// eigenvector normalized to maximum component +1; the eigenvector of the
// continuum problems this is used for is positive, which is asserted after
// the fact rather than enforced.
template <typename Op>
EigenResult smallest_eigenpair(const Op& A, const std::vector<double>& mass,
                               double tol = 1e-12, int max_iter = 500,
                               const std::vector<double>* init = nullptr) {
  const int n = A.size();
  if (static_cast<int>(mass.size()) != n)
    throw ValidationError("smallest_eigenpair: mass dimension mismatch");
  for (double m : mass)
    if (!(m > 0.0)) throw ValidationError("smallest_eigenpair: mass must be positive");

  std::vector<double> x(n, 1.0);
  if (init) {
    if (static_cast<int>(init->size()) != n)
      throw ValidationError("smallest_eigenpair: init dimension mismatch");
    x = *init;
  }
  auto normalize_sup = [&](std::vector<double>& v) {
    double m = 0.0;
    for (double t : v) m = std::max(m, std::abs(t));
    if (!(m > 0.0)) throw SingularOperator("smallest_eigenpair: zero iterate");
    for (double& t : v) t /= m;
  };
  normalize_sup(x);

  double rho_prev = 0.0;
  double sigma = 0.0;
  bool have_rho = false;
  std::vector<double> best_x;
  double best_res = 1e300, best_rho = 0.0;
  int best_it = 0;
  bool accepted = false;
  int iterations = 0;
  for (int it = 1; it <= max_iter; ++it) {
    iterations = it;
    std::vector<double> wx(n);
    for (int i = 0; i < n; ++i) wx[i] = mass[i] * x[i];
    x = detail::shifted_solve(A, mass, sigma, wx);
    normalize_sup(x);

    std::vector<double> Ax = A.apply(x);
    double num = 0.0, den = 0.0, nAx = 0.0, nWx = 0.0;
    for (int i = 0; i < n; ++i) {
      num += x[i] * Ax[i];
      den += mass[i] * x[i] * x[i];
    }
    const double rho = num / den;
    double res2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = Ax[i] - rho * mass[i] * x[i];
      res2 += r * r;
      nAx += Ax[i] * Ax[i];
      nWx += mass[i] * x[i] * mass[i] * x[i];
    }
    const double scale = std::max(std::sqrt(nAx), std::abs(rho) * std::sqrt(nWx));
    const double rel_res = std::sqrt(res2) / (scale > 0.0 ? scale : 1.0);
    if (rel_res < best_res * (1.0 - 0.02)) {
      best_res = rel_res;
      best_rho = rho;
      best_x = x;
      best_it = it;
    }
    if (rel_res <= tol) {
      best_res = rel_res;
      best_rho = rho;
      best_x = x;
      accepted = true;
      break;
    }
    if (it - best_it >= 10 && best_res <= 1e-7) {
      accepted = true; // rounding floor of the residual
      break;
    }
    if (detail::supports_shift(static_cast<const Op*>(nullptr)) && sigma == 0.0 &&
        have_rho && std::abs(rho - rho_prev) < 1e-3 * std::abs(rho)) {
      sigma = 0.99 * rho; // settled quotient overestimates lambda_1 by < 1%
    }
    rho_prev = rho;
    have_rho = true;
  }
  if (!accepted)
    throw NoConvergence("smallest_eigenpair: iteration cap reached");

  // Orient and normalize: max component +1.
  x = std::move(best_x);
  int arg = 0;
  double best = 0.0;
  for (int i = 0; i < n; ++i)
    if (std::abs(x[i]) > best) {
      best = std::abs(x[i]);
      arg = i;
    }
  const double s = x[arg] < 0.0 ? -1.0 / best : 1.0 / best;
  for (double& t : x) t *= s;
  for (double t : x)
    if (!(t > 0.0))
      throw NoConvergence("smallest_eigenpair: converged eigenvector is not positive");
  EigenResult out;
  out.lambda = best_rho;
  out.iterations = iterations;
  out.residual = best_res;
  out.vector = std::move(x);
  return out;
}

} // namespace conetrace
