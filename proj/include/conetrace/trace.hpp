#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "conetrace/cone.hpp"
#include "conetrace/errors.hpp"
#include "conetrace/grid.hpp"
#include "conetrace/harmonic.hpp"
#include "conetrace/spectrum.hpp"

namespace conetrace {

// Exhaustion of the truncated cone by annuli: level t_n keeps e^{-t_n} < r < 1,
// so deeper levels reach further into the vertex.  Boundary traces are read off
// as harmonic-measure integrals seen from the basepoint, which every truncated
// domain must contain.
struct Exhaustion {
  std::vector<double> levels; // t-levels, strictly increasing
  ConePoint basepoint = reference_point();
};

// One trace experiment: the integral of Z u against the harmonic measure of
// each truncated domain, with a three-point Aitken estimate of the limit.
// `diverging` is a reporting heuristic -- sustained doubling across the last
// three levels -- not a proof of blow-up.
struct TraceSequence {
  std::string test_label;
  std::vector<double> values;
  double limit_estimate = 0.0;
  bool diverging = false;
};

// A point of the meridian section in polar form; the vertex is r = 0.  Test
// functions are sampled on boundary nodes in these coordinates.
struct SectionPoint {
  double r = 0.0;
  double theta = 0.0;
};

using SectionFunction = std::function<double(double r, double theta)>;

namespace detail {

// Realize the levels as parent-grid t-faces (nearest face wins) and check the
// exhaustion invariants: at least four cell rows per level so the sub-cylinder
// solver has room, strictly increasing after snapping, strictly inside the
// parent truncation, and the basepoint interior to the shallowest domain.
inline std::vector<int> exhaustion_faces(const TensorGrid2D& grid, const Exhaustion& ex) {
  if (ex.levels.empty())
    throw ValidationError("Exhaustion: needs at least one level");
  if (ex.basepoint.theta != 0.0)
    throw ValidationError("Exhaustion: basepoint must sit on the axis");
  std::vector<int> faces;
  faces.reserve(ex.levels.size());
  for (double level : ex.levels) {
    const int i = static_cast<int>(std::llround((level - grid.t.a) / grid.t.h()));
    if (i < 4 || i > grid.t.n_cells - 1)
      throw ValidationError("Exhaustion: level " + std::to_string(level) +
                            " leaves no room between four cell rows and the "
                            "parent truncation");
    if (!faces.empty() && i <= faces.back())
      throw ValidationError("Exhaustion: levels must be strictly increasing on the grid");
    faces.push_back(i);
  }
  if (!(ex.basepoint.t < grid.t.face(faces.front())))
    throw ValidationError("Exhaustion: basepoint is outside the shallowest domain");
  return faces;
}

inline int level_face(const TensorGrid2D& grid, double level) {
  const int i = static_cast<int>(std::llround((level - grid.t.a) / grid.t.h()));
  if (i < 4 || i > grid.t.n_cells)
    throw ValidationError("truncated_grid: level must keep at least four cell "
                          "rows and stay within the parent grid");
  return i;
}

// Dirichlet data of the truncated domain at t-face index `face`: the test
// function sampled at boundary nodes times the cell-centered field carried to
// the boundary (second-order extrapolation onto the outer sphere and the
// lateral wall, face averaging onto the interior truncation sphere).
inline CylinderData boundary_restriction(const TensorGrid2D& grid,
                                         const std::vector<double>& u,
                                         const SectionFunction& Z, int face) {
  const int ntheta = grid.theta.n_cells;
  const double r_outer = std::exp(-grid.t.face(0));
  const double r_inner = std::exp(-grid.t.face(face));
  const double L = grid.theta.b;
  CylinderData data{std::vector<double>(ntheta), std::vector<double>(face),
                    std::vector<double>(ntheta)};
  for (int j = 0; j < ntheta; ++j) {
    const double th = grid.theta.center(j);
    data.outer[j] =
        Z(r_outer, th) * (1.5 * u[grid.index(0, j)] - 0.5 * u[grid.index(1, j)]);
    data.truncation[j] =
        Z(r_inner, th) *
        0.5 * (u[grid.index(face - 1, j)] + u[grid.index(face, j)]);
  }
  for (int i = 0; i < face; ++i)
    data.lateral[i] = Z(std::exp(-grid.t.center(i)), L) *
                      (1.5 * u[grid.index(i, ntheta - 1)] -
                       0.5 * u[grid.index(i, ntheta - 2)]);
  return data;
}

// Aitken's delta-squared step, trusted only while the implied geometric model
// holds: a correction an order of magnitude past the last observed step means
// the sequence is flat or noisy at this resolution, and c itself is the better
// estimate.
inline double aitken(double a, double b, double c) {
  const double d2 = (c - b) - (b - a);
  const double scale = std::max({std::abs(a), std::abs(b), std::abs(c)});
  if (std::abs(d2) <= 1e-12 * scale) return c;
  const double correction = (c - b) * (c - b) / d2;
  if (std::abs(correction) > 10.0 * std::abs(c - b)) return c;
  return c - correction;
}

// Divergence heuristic: each of the last three steps at least doubles the
// value, i.e. sustained geometric growth at the closing levels.  A slowly
// converging tail has step ratios tending to 1 and never trips this.
inline bool doubling_tail(const std::vector<double>& v) {
  const std::size_t m = v.size();
  if (m < 4) return false;
  return v[m - 3] > 2.0 * v[m - 4] && v[m - 2] > 2.0 * v[m - 3] &&
         v[m - 1] > 2.0 * v[m - 2];
}

// Physical samples u = e^{alpha t} v at the cell centers of a cone solution.
inline std::vector<double> physical_field(const ConeSolution& s) {
  std::vector<double> u(s.grid.size());
  for (int i = 0; i < s.grid.t.n_cells; ++i) {
    const double scale = std::exp(s.exponents.alpha * s.grid.t.center(i));
    for (int j = 0; j < s.grid.theta.n_cells; ++j) {
      const std::size_t p = s.grid.index(i, j);
      u[p] = scale * s.v[p];
    }
  }
  return u;
}

} // namespace detail

// Evenly spaced levels between t_first and t_last, snapped to grid faces.
// Fails fast if the request collapses two levels onto one face or violates an
// exhaustion invariant.
inline Exhaustion make_cone_exhaustion(const TensorGrid2D& grid, int n_levels,
                                       double t_first, double t_last) {
  if (n_levels < 2)
    throw ValidationError("make_cone_exhaustion: needs at least two levels");
  if (!(t_first > 0.0) || !(t_last > t_first))
    throw ValidationError("make_cone_exhaustion: needs 0 < t_first < t_last");
  Exhaustion ex;
  ex.levels.reserve(n_levels);
  for (int n = 0; n < n_levels; ++n) {
    const double t = t_first + (t_last - t_first) * n / (n_levels - 1.0);
    const int i = static_cast<int>(std::llround((t - grid.t.a) / grid.t.h()));
    ex.levels.push_back(grid.t.face(i));
  }
  detail::exhaustion_faces(grid, ex);
  return ex;
}

// The sub-cylinder of the parent grid up to the face nearest to `level`; the
// domain on which that level's harmonic measure lives.
inline TensorGrid2D truncated_grid(const TensorGrid2D& grid, double level) {
  const int i = detail::level_face(grid, level);
  return {Grid1D(grid.t.a, grid.t.face(i), i), grid.theta};
}

// The harmonic-measure integral of Dirichlet data h over the boundary of one
// truncated domain equals the harmonic extension of h evaluated at the
// basepoint, so it costs a single linear solve; the measure itself is never
// tabulated.  Data sides are sized for truncated_grid(grid, level).
inline double harmonic_measure_integral(const AxisymmetricOpening& opening,
                                        const TensorGrid2D& grid, double level,
                                        const CylinderData& boundary_values,
                                        const ConePoint& basepoint = reference_point()) {
  const TensorGrid2D sub = truncated_grid(grid, level);
  if (basepoint.theta != 0.0)
    throw ValidationError("harmonic_measure_integral: basepoint must sit on the axis");
  if (!(basepoint.t > sub.t.a && basepoint.t < sub.t.b))
    throw ValidationError("harmonic_measure_integral: basepoint is outside the "
                          "truncated domain");
  HarmonicCylinder cyl(opening, sub);
  return axis_value(sub, cyl.solve(boundary_values), basepoint.t);
}

// C^1 piecewise-quadratic cap: 1 at the probe point, vanishing outside the
// fixed radius, distances measured in the meridian section.
inline SectionFunction cap_bump(const SectionPoint& probe, double radius) {
  if (!(radius > 0.0))
    throw ValidationError("cap_bump: radius must be positive");
  return [probe, radius](double r, double theta) {
    const double d2 = r * r + probe.r * probe.r -
                      2.0 * r * probe.r * std::cos(theta - probe.theta);
    const double s = std::sqrt(std::max(0.0, d2)) / radius;
    if (s >= 1.0) return 0.0;
    if (s <= 0.5) return 1.0 - 2.0 * s * s;
    return 2.0 * (1.0 - s) * (1.0 - s);
  };
}

// Dynamic trace of a field against a test function: per exhaustion level, the
// harmonic-measure integral of (Z u) restricted to the truncated boundary.
// For a weak solution this converges to k Z(vertex); for the strong limit it
// grows without bound, which is what `diverging` reports.
inline TraceSequence dynamic_trace(const AxisymmetricOpening& opening,
                                   const TensorGrid2D& grid,
                                   const std::vector<double>& u,
                                   const SectionFunction& Z,
                                   const Exhaustion& exhaustion,
                                   std::string test_label = "trace") {
  if (u.size() != grid.size())
    throw ValidationError("dynamic_trace: field does not match the grid");
  if (!Z) throw ValidationError("dynamic_trace: needs a test function");
  const std::vector<int> faces = detail::exhaustion_faces(grid, exhaustion);
  TraceSequence seq;
  seq.test_label = std::move(test_label);
  seq.values.reserve(faces.size());
  for (int face : faces) {
    const CylinderData data = detail::boundary_restriction(grid, u, Z, face);
    seq.values.push_back(harmonic_measure_integral(opening, grid, grid.t.face(face),
                                                   data, exhaustion.basepoint));
  }
  const std::size_t m = seq.values.size();
  seq.limit_estimate = m >= 3 ? detail::aitken(seq.values[m - 3], seq.values[m - 2],
                                               seq.values[m - 1])
                              : seq.values.back();
  seq.diverging = detail::doubling_tail(seq.values);
  return seq;
}

inline TraceSequence dynamic_trace(const ConeSolution& solution,
                                   const SectionFunction& Z,
                                   const Exhaustion& exhaustion,
                                   std::string test_label = "trace") {
  return dynamic_trace(solution.opening, solution.grid,
                       detail::physical_field(solution), Z, exhaustion,
                       std::move(test_label));
}

// Scan candidate singular boundary points: each probe tests the trace against
// a unit cap bump centered there and reports whether the sequence diverges.
// A vertex probe flags the strong limit and passes every solution with a
// bounded trace.
inline std::vector<bool>
singular_mass_scan(const AxisymmetricOpening& opening, const TensorGrid2D& grid,
                   const std::vector<double>& u, const Exhaustion& exhaustion,
                   const std::vector<SectionPoint>& probe_points,
                   double cap_radius = 0.25) {
  std::vector<bool> flags;
  flags.reserve(probe_points.size());
  for (const SectionPoint& y : probe_points) {
    char label[64];
    std::snprintf(label, sizeof label, "cap r=%.3g theta=%.3g", y.r, y.theta);
    flags.push_back(
        dynamic_trace(opening, grid, u, cap_bump(y, cap_radius), exhaustion, label)
            .diverging);
  }
  return flags;
}

inline std::vector<bool>
singular_mass_scan(const ConeSolution& solution, const Exhaustion& exhaustion,
                   const std::vector<SectionPoint>& probe_points,
                   double cap_radius = 0.25) {
  return singular_mass_scan(solution.opening, solution.grid,
                            detail::physical_field(solution), exhaustion,
                            probe_points, cap_radius);
}

// Weighted integrability report for a vertex neighborhood r < region_radius:
// `mass` is the quadrature of u^q rho over the region down to the grid
// truncation, `trend` the fraction of it contributed by the deeper half of
// the log-depth range.  A trend near zero means the truncated integrals have
// converged (admissible data); a trend above one half means the mass keeps
// growing as the truncation refines toward the vertex, marking the region as
// singular-suspect.
struct RegularityReport {
  double mass = 0.0;
  double trend = 0.0;
};

// rho is the first eigenfunction of the domain normalized at the basepoint,
// approximated by its exact vertex behavior r^{alpha_tilde} phi(theta) times a
// fixed quintic cutoff on r in (1/2, 1); the classifier only needs finiteness
// trends, so the eigenproblem on the truncated cone is never solved.
inline RegularityReport
regularity_classifier(const AxisymmetricOpening& opening, double q,
                      const TensorGrid2D& grid, const std::vector<double>& u,
                      double region_radius = 0.5) {
  if (!(q > 1.0))
    throw ValidationError("regularity_classifier: requires q > 1");
  if (u.size() != grid.size())
    throw ValidationError("regularity_classifier: field does not match the grid");
  if (!(region_radius > std::exp(-grid.t.b) && region_radius <= 1.0))
    throw ValidationError("regularity_classifier: region must reach below r = 1 "
                          "and stay above the grid truncation");
  detail::check_cone_grid(opening, grid);
  EigenResult eig = detail::sl_smallest(opening, grid.theta.n_cells);
  std::vector<double> phi = std::move(eig.vector);
  const double pole = detail::pole_value(phi);
  for (double& p : phi) p /= pole;
  const double alpha_tilde = exponents(eig.lambda, opening.dim).alpha_tilde;
  const double azimuth = opening.dim == 2 ? 2.0 : 2.0 * pi;

  auto cutoff = [](double r) {
    if (r <= 0.5) return 1.0;
    if (r >= 1.0) return 0.0;
    const double s = (r - 0.5) / 0.5;
    return 1.0 - s * s * s * (10.0 + s * (6.0 * s - 15.0));
  };

  const double t_region = -std::log(region_radius);
  const double t_mid = 0.5 * (t_region + grid.t.b);
  const double cell = grid.t.h() * grid.theta.h();
  double mass = 0.0, mass_shallow = 0.0;
  for (int i = 0; i < grid.t.n_cells; ++i) {
    const double t = grid.t.center(i);
    if (t <= t_region) continue;
    const double r = std::exp(-t);
    // rho(x0) = 1 falls out of phi's pole normalization and cutoff(1/2) = 1.
    const double radial = std::pow(2.0 * r, alpha_tilde) * cutoff(r) *
                          std::exp(-opening.dim * t);
    double row = 0.0;
    for (int j = 0; j < grid.theta.n_cells; ++j) {
      const std::size_t p = grid.index(i, j);
      const double w = opening.dim == 2
                           ? 1.0
                           : std::pow(std::sin(grid.theta.center(j)),
                                      opening.weight_exponent());
      row += std::pow(std::abs(u[p]), q) * phi[j] * w;
    }
    const double slab = azimuth * radial * row * cell;
    mass += slab;
    if (t <= t_mid) mass_shallow += slab;
  }
  RegularityReport report;
  report.mass = mass;
  report.trend = mass > 0.0 ? (mass - mass_shallow) / mass : 0.0;
  return report;
}

inline RegularityReport regularity_classifier(const ConeSolution& solution,
                                              double region_radius = 0.5) {
  return regularity_classifier(solution.opening, solution.q, solution.grid,
                               detail::physical_field(solution), region_radius);
}

// CSV export: one row per level with the running three-point extrapolation
// (blank until three values exist).
inline void write_trace_csv(std::ostream& os, const Exhaustion& exhaustion,
                            const TraceSequence& seq) {
  if (exhaustion.levels.size() != seq.values.size())
    throw ValidationError("write_trace_csv: sequence does not match the exhaustion");
  auto g17 = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  os << "level,value,extrapolation\n";
  for (std::size_t n = 0; n < seq.values.size(); ++n) {
    os << g17(exhaustion.levels[n]) << ',' << g17(seq.values[n]) << ',';
    if (n >= 2)
      os << g17(detail::aitken(seq.values[n - 2], seq.values[n - 1], seq.values[n]));
    os << '\n';
  }
}

} // namespace conetrace
