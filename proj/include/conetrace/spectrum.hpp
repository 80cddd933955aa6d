#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "conetrace/banded.hpp"
#include "conetrace/eigen.hpp"
#include "conetrace/errors.hpp"
#include "conetrace/grid.hpp"

namespace conetrace {

inline constexpr double pi = 3.14159265358979323846;

// Opening of an axisymmetric circular cone: for N >= 3 the spherical cap of
// polar half-angle theta0 in (0, pi); for N = 2 a planar arc of full angle
// theta0 in (0, 2*pi).  The flat (theta0 = pi, N >= 3) and slit-complement
// (theta0 = 2*pi, N = 2) limits are rejected as degenerate.
struct AxisymmetricOpening {
  int dim = 3;
  double half_angle = pi / 2;

  AxisymmetricOpening() = default;
  AxisymmetricOpening(int N, double theta0) : dim(N), half_angle(theta0) {
    validate();
  }

  void validate() const {
    if (dim < 2) throw ValidationError("opening: dimension must be >= 2");
    const double hi = dim == 2 ? 2 * pi : pi;
    if (!(half_angle > 0.0) || !(half_angle < hi))
      throw ValidationError("opening: angle must lie strictly inside (0, " +
                            std::string(dim == 2 ? "2*pi" : "pi") + ")");
  }

  // The cross-section is symmetric about the cone axis, so the eigenvalue
  // problem reduces to an interval measured from the axis: the full cap
  // angle for N >= 3, half the arc for N = 2 (even reflection at the
  // bisector replaces the pole regularity condition).
  double reduced_angle() const { return dim == 2 ? half_angle / 2 : half_angle; }
  double weight_exponent() const { return dim == 2 ? 0.0 : double(dim - 2); }
};

struct EigenPair {
  double lambda = 0.0;
  std::vector<double> phi; // cell values, max-normalized to 1 at the pole cell
  Grid1D grid;
  double estimated_error = 0.0; // Richardson estimate from n vs n/2
  int iterations = 0;
};

struct ExponentTriple {
  double alpha = 0.0;       // blow-up rate of the decaying harmonic |x|^{-alpha}
  double alpha_tilde = 0.0; // vanishing rate of the regular harmonic |x|^{alpha_tilde}
  double q_S = 0.0;         // critical absorption exponent 1 + 2/alpha
};

enum class Criticality { Subcritical, CriticalOrSupercritical };

struct CriticalityClass {
  Criticality kind = Criticality::Subcritical;
  double margin = 0.0; // lambda_{N,q} - lambda_S (positive means subcritical)
  double lambda_S = 0.0;
  double lambda_Nq = 0.0;
  double estimated_error = 0.0;
  bool subcritical() const { return kind == Criticality::Subcritical; }
};

namespace detail {

// Sturm-Liouville assembly for -(w phi')' = lambda w phi on (0, L) with
// w = sin^{N-2}, cell-centered: zero-flux closure at the axis face (exact for
// N >= 3 where w(0) = 0) and a half-cell Dirichlet closure at L.  Returned as
// the symmetric pair (A, W) of the generalized problem A phi = lambda W phi.
struct SLProblem {
  BandedOperator A;
  std::vector<double> mass;
  Grid1D grid;
};

inline SLProblem assemble_sl(const AxisymmetricOpening& opening, int n_cells) {
  if (n_cells < 8) throw ValidationError("assemble_sl: needs n_cells >= 8");
  const double L = opening.reduced_angle();
  const double p = opening.weight_exponent();
  Grid1D g(0.0, L, n_cells);
  const double h = g.h();
  auto w_at = [&](double theta) { return p == 0.0 ? 1.0 : std::pow(std::sin(theta), p); };

  BandedOperator A(n_cells, 1);
  A.symmetric = true;
  std::vector<double> mass(n_cells);
  for (int j = 0; j < n_cells; ++j) {
    mass[j] = w_at(g.center(j));
    double diag = 0.0;
    if (j + 1 < n_cells) {
      const double wf = w_at(g.face(j + 1));
      A.at(j, j + 1) = -wf / (h * h);
      diag += wf / (h * h);
    } else {
      diag += 2.0 * w_at(g.face(n_cells)) / (h * h); // Dirichlet at L
    }
    if (j > 0) {
      const double wf = w_at(g.face(j));
      A.at(j, j - 1) = -wf / (h * h);
      diag += wf / (h * h);
    }
    // j == 0: the axis face carries zero flux (w vanishes for N >= 3; even
    // reflection for N = 2), so it contributes nothing.
    A.at(j, j) = diag;
  }
  return {std::move(A), std::move(mass), g};
}

inline EigenResult sl_smallest(const AxisymmetricOpening& opening, int n_cells) {
  SLProblem p = assemble_sl(opening, n_cells);
  return smallest_eigenpair(p.A, p.mass, 1e-13);
}

} // namespace detail

// Closed forms where available: any planar arc, and the half-equator cap.
inline std::optional<double> lambda_exact(const AxisymmetricOpening& opening) {
  opening.validate();
  if (opening.dim == 2) {
    const double v = pi / opening.half_angle;
    return v * v;
  }
  if (std::abs(opening.half_angle - pi / 2) <= 1e-12)
    return double(opening.dim - 1);
  return std::nullopt;
}

// First Dirichlet eigenvalue of the cross-section, discretized.  The error
// estimate is the Richardson comparison with the half-resolution run (O(h^2)
// scheme, safety factor 1.1 so the estimate stays an upper bound).
inline EigenPair lambda_numeric(const AxisymmetricOpening& opening, int n_cells) {
  opening.validate();
  if (n_cells < 64)
    throw ValidationError("lambda_numeric: resolution must be at least 64 cells");
  if (n_cells % 2 != 0)
    throw ValidationError("lambda_numeric: resolution must be even");
  detail::SLProblem p = detail::assemble_sl(opening, n_cells);
  EigenResult fine = smallest_eigenpair(p.A, p.mass, 1e-13);
  EigenResult coarse = detail::sl_smallest(opening, n_cells / 2);
  EigenPair out;
  out.lambda = fine.lambda;
  out.phi = std::move(fine.vector);
  out.grid = p.grid;
  out.estimated_error = 1.1 * std::abs(fine.lambda - coarse.lambda) / 3.0;
  out.iterations = fine.iterations;
  return out;
}

// Characteristic exponents of r^2 u'' ~ ... at the vertex: the two roots of
// X^2 + (N-2) X - lambda_S = 0 give the singular harmonic |x|^{-alpha} phi and
// the regular one |x|^{alpha_tilde} phi; q_S = 1 + 2/alpha separates the
// absorption regimes.
inline ExponentTriple exponents(double lambda_S, int dim) {
  if (dim < 2) throw ValidationError("exponents: dimension must be >= 2");
  if (!(lambda_S > 0.0)) throw ValidationError("exponents: lambda_S must be positive");
  const double nm2 = double(dim - 2);
  const double root = std::sqrt(nm2 * nm2 + 4.0 * lambda_S);
  ExponentTriple t;
  t.alpha = (nm2 + root) / 2.0;
  t.alpha_tilde = (root - nm2) / 2.0;
  t.q_S = 1.0 + 2.0 / t.alpha;
  return t;
}

// Threshold eigenvalue at which a given absorption exponent q becomes
// critical: lambda_{N,q} = (2/(q-1)) * (2q/(q-1) - N).  May be negative.
inline double lambda_Nq(int dim, double q) {
  if (dim < 2) throw ValidationError("lambda_Nq: dimension must be >= 2");
  if (!(q > 1.0)) throw ValidationError("lambda_Nq: exponent must exceed 1");
  const double a = 2.0 / (q - 1.0);
  return a * (a + 2.0 - double(dim));
}

// Subcritical iff lambda_S < lambda_{N,q}, cross-checked against the
// equivalent exponent test alpha_S < 2/(q-1).  Disagreement beyond rounding
// is a consistency bug; a margin smaller than the eigenvalue error estimate
// is reported as undecidable.
inline CriticalityClass classify(const AxisymmetricOpening& opening, double q,
                                 int n_cells = 256) {
  CriticalityClass c;
  if (auto ex = lambda_exact(opening)) {
    c.lambda_S = *ex;
    c.estimated_error = 0.0;
  } else {
    EigenPair ep = lambda_numeric(opening, n_cells);
    c.lambda_S = ep.lambda;
    c.estimated_error = ep.estimated_error;
  }
  c.lambda_Nq = lambda_Nq(opening.dim, q);
  c.margin = c.lambda_Nq - c.lambda_S;
  const bool sub_lambda = c.lambda_S < c.lambda_Nq;
  const bool sub_alpha = exponents(c.lambda_S, opening.dim).alpha < 2.0 / (q - 1.0);
  if (sub_lambda != sub_alpha && std::abs(c.margin) > 1e-9)
    throw ConsistencyError("classify: eigenvalue and exponent tests disagree");
  if (std::abs(c.margin) < c.estimated_error)
    throw AmbiguousNearCritical("classify: margin " + std::to_string(c.margin) +
                                " below eigenvalue error estimate");
  c.kind = sub_lambda ? Criticality::Subcritical : Criticality::CriticalOrSupercritical;
  return c;
}

} // namespace conetrace
