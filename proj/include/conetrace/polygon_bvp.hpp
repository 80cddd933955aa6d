#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "conetrace/banded.hpp"
#include "conetrace/eigen.hpp"
#include "conetrace/polygon.hpp"
#include "conetrace/trace.hpp"

namespace conetrace {

enum class NodeKind : unsigned char { Exterior, Boundary, Interior };

// Uniform lattice over the bounding box with nodes classified against the
// polygon.  Vertices are required to land on lattice points, so boundary
// nodes lie exactly on edges and the five-point stencil conforms to the
// domain with no cut cells.
struct PolygonGrid {
  RectilinearPolygon poly;
  Point2 origin;  // bounding-box corner; node (0,0)
  double h = 0.0;
  int nx = 0, ny = 0; // cells per axis
  std::vector<NodeKind> kind;
  int basepoint = -1; // centroid snapped to the nearest interior node

  int columns() const { return nx + 1; }
  int rows() const { return ny + 1; }
  int size() const { return columns() * rows(); }
  int index(int ix, int iy) const { return iy * columns() + ix; }
  Point2 node(int p) const {
    return {origin.x + (p % columns()) * h, origin.y + (p / columns()) * h};
  }
  bool interior(int p) const { return kind[p] == NodeKind::Interior; }

  // Node index of a lattice-aligned point; -1 when off-lattice or outside
  // the bounding box.
  int locate(const Point2& p) const {
    const double fx = (p.x - origin.x) / h, fy = (p.y - origin.y) / h;
    const long ix = std::lround(fx), iy = std::lround(fy);
    if (std::abs(fx - ix) > 1e-6 || std::abs(fy - iy) > 1e-6) return -1;
    if (ix < 0 || ix > nx || iy < 0 || iy > ny) return -1;
    return index(static_cast<int>(ix), static_cast<int>(iy));
  }
};

inline PolygonGrid make_polygon_grid(const RectilinearPolygon& poly, int n_cells) {
  poly.validate();
  if (n_cells < 8)
    throw ValidationError("polygon grid: need at least 8 cells across the longer side");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Point2& v : poly.vertices) {
    xmin = std::min(xmin, v.x);
    xmax = std::max(xmax, v.x);
    ymin = std::min(ymin, v.y);
    ymax = std::max(ymax, v.y);
  }
  PolygonGrid grid;
  grid.poly = poly;
  grid.origin = {xmin, ymin};
  const double L = std::max(xmax - xmin, ymax - ymin);
  grid.h = L / n_cells;
  grid.nx = static_cast<int>(std::lround((xmax - xmin) / grid.h));
  grid.ny = static_cast<int>(std::lround((ymax - ymin) / grid.h));

  // integer vertex coordinates in lattice units; everything downstream
  // (boundary membership, crossing parity) is exact integer arithmetic
  const int n = poly.size();
  std::vector<long> vx(n), vy(n);
  for (int i = 0; i < n; ++i) {
    const double fx = (poly.vertices[i].x - xmin) / grid.h;
    const double fy = (poly.vertices[i].y - ymin) / grid.h;
    vx[i] = std::lround(fx);
    vy[i] = std::lround(fy);
    if (std::abs(fx - vx[i]) > 1e-6 || std::abs(fy - vy[i]) > 1e-6)
      throw InvalidPolygon("polygon grid: vertex " + std::to_string(i) +
                           " is off the lattice; choose a cell count that divides "
                           "every edge length");
  }

  grid.kind.assign(grid.size(), NodeKind::Exterior);
  for (int iy = 0; iy <= grid.ny; ++iy)
    for (int ix = 0; ix <= grid.nx; ++ix) {
      bool boundary = false, inside = false;
      for (int e = 0; e < n && !boundary; ++e) {
        const int f = (e + 1) % n;
        if (vx[e] == vx[f]) {
          const long ylo = std::min(vy[e], vy[f]), yhi = std::max(vy[e], vy[f]);
          boundary = vx[e] == ix && ylo <= iy && iy <= yhi;
          // crossing parity of the +x ray from the quarter-shifted point
          // (ix + 1/4, iy + 1/4): exact in integers
          if (vx[e] > ix && ylo <= iy && iy < yhi) inside = !inside;
        } else {
          const long xlo = std::min(vx[e], vx[f]), xhi = std::max(vx[e], vx[f]);
          boundary = vy[e] == iy && xlo <= ix && ix <= xhi;
        }
      }
      if (boundary)
        grid.kind[grid.index(ix, iy)] = NodeKind::Boundary;
      else if (inside)
        grid.kind[grid.index(ix, iy)] = NodeKind::Interior;
    }

  // basepoint: nearest interior node to the area centroid, scanning outward
  const Point2 c = poly.centroid();
  const int cx = std::clamp(static_cast<int>(std::lround((c.x - xmin) / grid.h)), 0, grid.nx);
  const int cy = std::clamp(static_cast<int>(std::lround((c.y - ymin) / grid.h)), 0, grid.ny);
  for (int ring = 0; ring <= std::max(grid.nx, grid.ny) && grid.basepoint < 0; ++ring)
    for (int dy = -ring; dy <= ring && grid.basepoint < 0; ++dy)
      for (int dx = -ring; dx <= ring && grid.basepoint < 0; ++dx) {
        if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
        const int ix = cx + dx, iy = cy + dy;
        if (ix < 0 || ix > grid.nx || iy < 0 || iy > grid.ny) continue;
        if (grid.kind[grid.index(ix, iy)] == NodeKind::Interior)
          grid.basepoint = grid.index(ix, iy);
      }
  if (grid.basepoint < 0)
    throw InvalidPolygon("polygon grid: no interior node found; resolution too coarse");
  return grid;
}

// Eliminated-Dirichlet assembly: interior rows carry the five-point Laplacian
// restricted to interior columns (boundary values enter through the right
// hand side), boundary and exterior rows are identity.  The result is
// symmetric positive definite, so one Cholesky factorization serves every
// harmonic solve on this grid.
struct PolygonSystem {
  PolygonGrid grid;
  BandedOperator A;
  std::vector<double> nl_mass; // 1 on interior nodes: the absorption support
  BandedCholesky chol;
};

inline PolygonSystem make_polygon_system(const RectilinearPolygon& poly, int n_cells) {
  PolygonGrid grid = make_polygon_grid(poly, n_cells);
  const int n = grid.size(), stride = grid.columns();
  BandedOperator A(n, stride);
  std::vector<double> nl(n, 0.0);
  const double ih2 = 1.0 / (grid.h * grid.h);
  for (int iy = 0; iy <= grid.ny; ++iy)
    for (int ix = 0; ix <= grid.nx; ++ix) {
      const int p = grid.index(ix, iy);
      if (!grid.interior(p)) {
        A.at(p, p) = 1.0;
        continue;
      }
      nl[p] = 1.0;
      A.at(p, p) = 4.0 * ih2;
      const int nbs[4] = {p - 1, p + 1, p - stride, p + stride};
      for (int nb : nbs)
        if (grid.interior(nb)) A.at(p, nb) = -ih2;
    }
  A.symmetric = true;
  BandedCholesky chol(A);
  return {std::move(grid), std::move(A), std::move(nl), std::move(chol)};
}

// Right-hand side realizing Dirichlet data g (read at boundary nodes only):
// boundary rows get the value itself, interior rows collect the eliminated
// neighbor couplings.
inline std::vector<double> dirichlet_rhs(const PolygonSystem& sys,
                                         const std::vector<double>& g) {
  const PolygonGrid& grid = sys.grid;
  if (static_cast<int>(g.size()) != grid.size())
    throw ValidationError("dirichlet_rhs: data size does not match the grid");
  std::vector<double> b(grid.size(), 0.0);
  const int stride = grid.columns();
  const double ih2 = 1.0 / (grid.h * grid.h);
  for (int p = 0; p < grid.size(); ++p) {
    if (grid.kind[p] == NodeKind::Boundary) {
      b[p] = g[p];
    } else if (grid.interior(p)) {
      const int nbs[4] = {p - 1, p + 1, p - stride, p + stride};
      for (int nb : nbs)
        if (grid.kind[nb] == NodeKind::Boundary) b[p] += g[nb] * ih2;
    }
  }
  return b;
}

inline std::vector<double> harmonic_extension(const PolygonSystem& sys,
                                              const std::vector<double>& g) {
  return sys.chol.solve(dirichlet_rhs(sys, g));
}

// Indicator of a boundary set on the grid's boundary nodes.
inline std::vector<double> boundary_indicator(const PolygonGrid& grid,
                                              const BoundarySet& set) {
  std::vector<double> ind(grid.size(), 0.0);
  const double tol = 1e-9 * grid.h;
  for (int p = 0; p < grid.size(); ++p)
    if (grid.kind[p] == NodeKind::Boundary &&
        set_distance(grid.poly, set, grid.node(p)) <= tol)
      ind[p] = 1.0;
  return ind;
}

namespace detail {

// Feature-local frame for the wedge kernel at a boundary point: angles are
// measured counterclockwise from the outgoing boundary direction, so the
// interior occupies theta in (0, omega).  The cutoff radius is one third of
// the distance to the nearest other feature, keeping the supported sector
// inside the domain.
struct WedgeFrame {
  Point2 y;
  double omega = 0.0;
  double phi0 = 0.0;
  double cutoff = 0.0;
  double q_c = 0.0;
};

inline WedgeFrame locate_wedge(const RectilinearPolygon& poly, const Point2& y) {
  const int n = poly.size();
  double diam = 0.0;
  for (int i = 0; i < n; ++i)
    diam = std::max(diam, std::hypot(poly.vertex(i).x - poly.vertex(0).x,
                                     poly.vertex(i).y - poly.vertex(0).y));
  const double tol = 1e-9 * diam;
  auto edge_distance = [&](int e) {
    const Point2 &a = poly.vertex(e), &b = poly.vertex(e + 1);
    const double dx = b.x - a.x, dy = b.y - a.y;
    double s = ((y.x - a.x) * dx + (y.y - a.y) * dy) / (dx * dx + dy * dy);
    s = std::clamp(s, 0.0, 1.0);
    return std::hypot(y.x - (a.x + s * dx), y.y - (a.y + s * dy));
  };
  auto clearance = [&](int corner, int own_edge) {
    double best = 1e300;
    for (int i = 0; i < n; ++i) {
      if (i == corner) continue;
      best = std::min(best, std::hypot(y.x - poly.vertex(i).x, y.y - poly.vertex(i).y));
    }
    for (int e = 0; e < n; ++e) {
      if (e == own_edge) continue;
      if (corner >= 0 && (e == corner || (e + 1) % n == corner)) continue;
      best = std::min(best, edge_distance(e));
    }
    return best;
  };

  WedgeFrame w;
  w.y = y;
  for (int i = 0; i < n; ++i) {
    const Point2& v = poly.vertex(i);
    if (std::hypot(y.x - v.x, y.y - v.y) <= tol) {
      const Point2 d = poly.edge_direction(i);
      w.omega = poly.interior_angle(i);
      w.phi0 = std::atan2(d.y, d.x);
      w.cutoff = clearance(i, -1) / 3.0;
      w.q_c = critical_exponent_of_opening(w.omega);
      return w;
    }
  }
  for (int e = 0; e < n; ++e) {
    if (edge_distance(e) > tol) continue;
    const Point2 d = poly.edge_direction(e);
    w.omega = pi;
    w.phi0 = std::atan2(d.y, d.x);
    w.cutoff = clearance(-1, e) / 3.0;
    w.q_c = critical_exponent_of_opening(pi);
    return w;
  }
  throw ValidationError("measure datum: point is not on the polygon boundary");
}

// Quintic cutoff in r: identically 1 inside half the support radius, smoothly
// 0 beyond it; C^2, which keeps the commutator below bounded.
inline double wedge_cutoff(const WedgeFrame& w, double r) {
  const double half = w.cutoff / 2.0;
  if (r <= half) return 1.0;
  if (r >= w.cutoff) return 0.0;
  const double s = (r - half) / half;
  return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

// chi * L with L(r, theta) = r^{-pi/omega} sin(pi theta / omega): the exact
// harmonic wedge kernel localized by the cutoff.  Vanishes identically on the
// boundary: sin is zero on the two edges through y and chi is zero before any
// other boundary piece can be reached.
inline double wedge_lift(const WedgeFrame& w, const Point2& x) {
  const double r = std::hypot(x.x - w.y.x, x.y - w.y.y);
  if (r <= 0.0 || r >= w.cutoff) return 0.0;
  double th = std::atan2(x.y - w.y.y, x.x - w.y.x) - w.phi0;
  while (th < 0.0) th += 2.0 * pi;
  const double a = pi / w.omega;
  return wedge_cutoff(w, r) * std::pow(r, -a) * std::sin(a * th);
}

// -Laplace(chi L) = -(2 grad chi . grad L + L Laplace chi): supported on the
// cutoff annulus and smooth there because L itself is harmonic.  This is the
// defect the correction solve removes; using the analytic form (rather than
// applying the discrete operator to the lift) is what leaves the concentrated
// near-singularity charge in place — the discrete defect would cancel the
// lift exactly and collapse the kernel to zero.
inline double wedge_commutator(const WedgeFrame& w, const Point2& x) {
  const double r = std::hypot(x.x - w.y.x, x.y - w.y.y);
  const double half = w.cutoff / 2.0;
  if (r <= half || r >= w.cutoff) return 0.0;
  double th = std::atan2(x.y - w.y.y, x.x - w.y.x) - w.phi0;
  while (th < 0.0) th += 2.0 * pi;
  const double a = pi / w.omega;
  const double s = (r - half) / half;
  const double d1 = -30.0 * s * s * (1.0 - s) * (1.0 - s) / half;
  const double d2 = -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (half * half);
  return -std::pow(r, -a - 1.0) * std::sin(a * th) * ((1.0 - 2.0 * a) * d1 + r * d2);
}

} // namespace detail

// Discrete Martin kernel at the boundary point y: wedge lift plus the
// harmonic correction with zero boundary data, normalized to 1 at the
// basepoint.  A-harmonic away from y up to discretization error, with the
// measure-representing charge concentrated on the few nodes nearest y.
inline std::vector<double> martin_kernel(const PolygonSystem& sys, const Point2& y) {
  const PolygonGrid& grid = sys.grid;
  const detail::WedgeFrame w = detail::locate_wedge(grid.poly, y);
  std::vector<double> lift(grid.size(), 0.0), rhs(grid.size(), 0.0);
  for (int p = 0; p < grid.size(); ++p) {
    if (!grid.interior(p)) continue;
    const Point2 x = grid.node(p);
    lift[p] = detail::wedge_lift(w, x);
    rhs[p] = -detail::wedge_commutator(w, x);
  }
  std::vector<double> K = sys.chol.solve(rhs);
  for (int p = 0; p < grid.size(); ++p) K[p] += lift[p];
  const double norm = K[grid.basepoint];
  if (!(norm > 0.0))
    throw ConsistencyError("martin_kernel: nonpositive value at the normalization node");
  for (double& k : K) k /= norm;
  return K;
}

// First Dirichlet eigenfunction of the polygon, normalized to 1 at the
// basepoint.  Inverse power iteration with the interior-masked identity as
// the mass: right-hand sides vanish on the pinned rows, so boundary and
// exterior components stay exactly zero and the system's existing Cholesky
// factorization does all the work.
inline EigenResult polygon_ground_state(const PolygonSystem& sys, double tol = 1e-10,
                                        int max_iter = 500) {
  const PolygonGrid& grid = sys.grid;
  const int n = grid.size();
  std::vector<double> x(n, 0.0);
  for (int p = 0; p < n; ++p)
    if (grid.interior(p)) x[p] = 1.0;

  EigenResult out;
  for (int it = 1; it <= max_iter; ++it) {
    out.iterations = it;
    std::vector<double> rhs(n, 0.0);
    for (int p = 0; p < n; ++p)
      if (grid.interior(p)) rhs[p] = x[p];
    x = sys.chol.solve(rhs);
    double sup = 0.0;
    for (double v : x) sup = std::max(sup, std::abs(v));
    if (!(sup > 0.0)) throw SingularOperator("ground state: zero iterate");
    for (double& v : x) v /= sup;

    const std::vector<double> Ax = sys.A.apply(x);
    double num = 0.0, den = 0.0, res2 = 0.0, nAx = 0.0;
    for (int p = 0; p < n; ++p) {
      if (!grid.interior(p)) continue;
      num += x[p] * Ax[p];
      den += x[p] * x[p];
      nAx += Ax[p] * Ax[p];
    }
    out.lambda = num / den;
    for (int p = 0; p < n; ++p) {
      if (!grid.interior(p)) continue;
      const double r = Ax[p] - out.lambda * x[p];
      res2 += r * r;
    }
    out.residual = std::sqrt(res2 / nAx);
    if (out.residual <= tol) break;
  }
  if (out.residual > tol)
    throw NoConvergence("ground state: inverse iteration cap reached");
  for (int p = 0; p < n; ++p)
    if (grid.interior(p) && !(x[p] > 0.0))
      throw ConsistencyError("ground state: interior eigenvector component is not positive");
  out.vector = std::move(x);
  return out;
}

inline std::vector<double> dirichlet_ground_state(const PolygonSystem& sys) {
  EigenResult eig = polygon_ground_state(sys);
  std::vector<double> rho = std::move(eig.vector);
  const double base = rho[sys.grid.basepoint];
  if (!(base > 0.0))
    throw ConsistencyError("ground state: nonpositive value at the normalization node");
  for (double& r : rho) r /= base;
  return rho;
}

namespace detail {

// Bilinear interpolation of a nodal field; fields vanish on boundary and
// exterior nodes, so cells straddling the boundary degrade gracefully.
inline double bilerp(const PolygonGrid& grid, const std::vector<double>& f,
                     const Point2& x) {
  const double fx = (x.x - grid.origin.x) / grid.h;
  const double fy = (x.y - grid.origin.y) / grid.h;
  const int i0 = std::clamp(static_cast<int>(std::floor(fx)), 0, grid.nx - 1);
  const int j0 = std::clamp(static_cast<int>(std::floor(fy)), 0, grid.ny - 1);
  const double ax = std::clamp(fx - i0, 0.0, 1.0), ay = std::clamp(fy - j0, 0.0, 1.0);
  return (1.0 - ax) * (1.0 - ay) * f[grid.index(i0, j0)] +
         ax * (1.0 - ay) * f[grid.index(i0 + 1, j0)] +
         (1.0 - ax) * ay * f[grid.index(i0, j0 + 1)] +
         ax * ay * f[grid.index(i0 + 1, j0 + 1)];
}

} // namespace detail

// Integral of K(.,y)^q rho over the polygon by midpoint quadrature on nested
// grids.  The kernel's closed-form part is evaluated exactly at quadrature
// points; only the smooth correction and the ground state are interpolated
// from the solver grid — so the refinement trend genuinely probes the
// singularity and not the solver resolution.
struct AdmissibilityReport {
  Point2 feature;
  double q = 0.0;
  std::vector<int> levels;
  std::vector<double> masses;
  double trend = 0.0; // last mass / previous mass
};

inline AdmissibilityReport admissibility_mass(const RectilinearPolygon& poly,
                                              const Point2& y, double q,
                                              std::vector<int> levels = {64, 256, 1024},
                                              int solver_cells = 128) {
  if (!(q > 1.0)) throw ValidationError("admissibility_mass: q must exceed 1");
  if (levels.size() < 2)
    throw ValidationError("admissibility_mass: need at least two refinement levels");
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (levels[i] <= levels[i - 1])
      throw ValidationError("admissibility_mass: levels must increase");

  const PolygonSystem sys = make_polygon_system(poly, solver_cells);
  const PolygonGrid& grid = sys.grid;
  const detail::WedgeFrame w = detail::locate_wedge(poly, y);
  std::vector<double> rhs(grid.size(), 0.0);
  for (int p = 0; p < grid.size(); ++p)
    if (grid.interior(p)) rhs[p] = -detail::wedge_commutator(w, grid.node(p));
  const std::vector<double> corr = sys.chol.solve(rhs);
  const Point2 x0 = grid.node(grid.basepoint);
  const double norm = detail::wedge_lift(w, x0) + corr[grid.basepoint];
  if (!(norm > 0.0))
    throw ConsistencyError("admissibility_mass: nonpositive kernel normalization");
  const std::vector<double> rho = dirichlet_ground_state(sys);

  double xmax = grid.origin.x + grid.nx * grid.h;
  double ymax = grid.origin.y + grid.ny * grid.h;
  const double L = std::max(xmax - grid.origin.x, ymax - grid.origin.y);

  AdmissibilityReport report;
  report.feature = y;
  report.q = q;
  report.levels = levels;
  for (int m : levels) {
    const double hq = L / m;
    const int mx = static_cast<int>(std::ceil((xmax - grid.origin.x) / hq));
    const int my = static_cast<int>(std::ceil((ymax - grid.origin.y) / hq));
    double mass = 0.0;
    for (int j = 0; j < my; ++j)
      for (int i = 0; i < mx; ++i) {
        const Point2 x{grid.origin.x + (i + 0.5) * hq, grid.origin.y + (j + 0.5) * hq};
        if (!poly.contains(x)) continue;
        const double k = (detail::wedge_lift(w, x) + detail::bilerp(grid, corr, x)) / norm;
        mass += std::pow(std::abs(k), q) * detail::bilerp(grid, rho, x) * hq * hq;
      }
    report.masses.push_back(mass);
  }
  report.trend = report.masses.back() / report.masses[report.masses.size() - 2];
  return report;
}

// Boundary measure data: finite Diracs at boundary points plus a
// piecewise-constant density with respect to arc length.  Overlapping pieces
// superpose additively.
struct DiracMass {
  Point2 point;
  double mass = 1.0;
};

struct DensitySpan {
  EdgeSpan span;
  double value = 0.0;
};

struct MeasureDatum {
  std::vector<DiracMass> diracs;
  std::vector<DensitySpan> densities;

  bool empty() const { return diracs.empty() && densities.empty(); }
};

struct PolygonSolution {
  PolygonGrid grid;
  double q = 0.0;
  MeasureDatum datum;   // regular part of the boundary trace
  BoundarySet blow_up;  // singular part F; empty for pure measure data
  std::vector<double> u;
  NewtonReport newton;
};

namespace detail {

inline std::vector<double> measure_lift(const PolygonSystem& sys,
                                        const MeasureDatum& datum, double q) {
  const PolygonGrid& grid = sys.grid;
  std::vector<double> lift(grid.size(), 0.0);
  for (const DiracMass& d : datum.diracs) {
    const WedgeFrame w = locate_wedge(grid.poly, d.point);
    if (q >= w.q_c) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "dirac at (%g, %g): q = %g is at or above the critical exponent "
                    "%g of this feature; the datum is not admissible",
                    d.point.x, d.point.y, q, w.q_c);
      throw InadmissibleDatum(buf);
    }
    if (!(d.mass >= 0.0))
      throw ValidationError("measure datum: Dirac masses must be nonnegative");
    const std::vector<double> K = martin_kernel(sys, d.point);
    for (int p = 0; p < grid.size(); ++p) lift[p] += d.mass * K[p];
  }
  if (!datum.densities.empty()) {
    std::vector<double> g(grid.size(), 0.0);
    const double tol = 1e-9 * grid.h;
    for (const DensitySpan& ds : datum.densities) {
      BoundarySet one;
      one.edges.push_back(ds.span);
      validate_boundary_set(grid.poly, one);
      if (!(ds.value >= 0.0))
        throw ValidationError("measure datum: density values must be nonnegative");
      for (int p = 0; p < grid.size(); ++p)
        if (grid.kind[p] == NodeKind::Boundary &&
            set_distance(grid.poly, one, grid.node(p)) <= tol)
          g[p] += ds.value;
    }
    const std::vector<double> ext = harmonic_extension(sys, g);
    for (int p = 0; p < grid.size(); ++p) lift[p] += ext[p];
  }
  return lift;
}

} // namespace detail

// Unique solution with boundary trace datum: total harmonic lift (Dirac
// kernels times masses plus the density's harmonic extension), then a Newton
// solve for the absorbed remainder.  The lift is the exact linear solution,
// so it both builds the right-hand side (b = A lift) and warm-starts Newton.
inline PolygonSolution solve_measure_bvp(const PolygonSystem& sys, double q,
                                         const MeasureDatum& datum) {
  if (!(q > 1.0)) throw ValidationError("solve_measure_bvp: q must exceed 1");
  std::vector<double> lift = detail::measure_lift(sys, datum, q);
  const std::vector<double> b = sys.A.apply(lift);
  auto [u, report] = detail::absorption_solve(sys.A, sys.nl_mass, q, b, std::move(lift));
  return {sys.grid, q, datum, BoundarySet{}, std::move(u), report};
}

inline PolygonSolution solve_measure_bvp(const RectilinearPolygon& poly, double q,
                                         const MeasureDatum& datum, int n_cells) {
  return solve_measure_bvp(make_polygon_system(poly, n_cells), q, datum);
}

// Doubling schedule for blow-up data.  The loop stops when the interior probe
// settles to probe_tol, or when M reaches the one-cell absorption ceiling
// (beta^2)^(1/(q-1)) h^(-beta), whichever comes first; see combined_solution.
struct MaximalSchedule {
  double M0 = 16.0;
  int max_doublings = 48;
  double probe_tol = 1e-4; // relative change of the basepoint value
};

namespace detail {

// Shared doubling loop: solve with boundary data (density of nu) + M on F,
// doubling M until the interior probe at the basepoint stabilizes.  With nu
// empty this is the maximal solution U_F; with F empty it reduces to a single
// measure solve.
//
// The loop also stops once M reaches the absorption ceiling one cell away
// from the blow-up set, M* = (beta^2)^(1/(q-1)) h^(-beta) with beta = 2/(q-1).
// Past that point the boundary layer is saturated (the first interior layer
// already sits at its barrier value) and further growth of the probe is a
// grid artifact: on a fixed lattice the M -> infinity limit diverges -- the
// per-doubling increment decays only like 1/j -- whereas the object being
// approximated is the limit taken after h -> 0.  Stopping every solve with
// the same (q, h) at the same deterministic M keeps the discrete comparison
// principle exact between the solutions that are later compared nodewise.
inline PolygonSolution combined_solution(const PolygonSystem& sys, double q,
                                         const MeasureDatum& nu, const BoundarySet& F,
                                         const MaximalSchedule& sched) {
  if (!(q > 1.0)) throw ValidationError("polygon solve: q must exceed 1");
  validate_boundary_set(sys.grid.poly, F);
  if (F.empty()) {
    PolygonSolution sol = solve_measure_bvp(sys, q, nu);
    return sol;
  }
  const std::vector<double> ind = boundary_indicator(sys.grid, F);
  if (*std::max_element(ind.begin(), ind.end()) == 0.0)
    throw ValidationError("blow-up set: contains no boundary node at this resolution");
  std::vector<double> lift = measure_lift(sys, nu, q);
  const std::vector<double> b0 = sys.A.apply(lift);

  const double beta = 2.0 / (q - 1.0);
  const double m_ceiling =
      std::pow(beta * beta, 1.0 / (q - 1.0)) * std::pow(sys.grid.h, -beta);

  const int n = sys.grid.size();
  std::vector<double> u;
  NewtonReport report;
  double M = sched.M0, prev = 0.0;
  for (int j = 0; j <= sched.max_doublings; ++j, M *= 2.0) {
    std::vector<double> g(n, 0.0);
    for (int p = 0; p < n; ++p) g[p] = M * ind[p];
    std::vector<double> b = dirichlet_rhs(sys, g);
    for (int p = 0; p < n; ++p) b[p] += b0[p];
    std::vector<double> init = j == 0 ? sys.chol.solve(b) : u;
    std::tie(u, report) = absorption_solve(sys.A, sys.nl_mass, q, b, std::move(init));
    const double probe = u[sys.grid.basepoint];
    const bool settled =
        j > 0 && std::abs(probe - prev) <= sched.probe_tol * std::max(1.0, std::abs(probe));
    if (settled || M >= m_ceiling)
      return {sys.grid, q, nu, F, std::move(u), report};
    prev = probe;
  }
  throw ScheduleExhausted("polygon solve: interior probe still moving after " +
                          std::to_string(sched.max_doublings) + " doublings of the boundary data");
}

} // namespace detail

// Maximal solution with blow-up on F: boundary data M on the nodes of F and
// zero elsewhere, along the doubling schedule, until the interior probe
// saturates under the absorption ceiling.
inline PolygonSolution maximal_solution(const PolygonSystem& sys, double q,
                                        const BoundarySet& F,
                                        const MaximalSchedule& sched = {}) {
  if (F.empty()) {
    NewtonReport report;
    report.converged = true;
    return {sys.grid, q, MeasureDatum{}, F, std::vector<double>(sys.grid.size(), 0.0), report};
  }
  return detail::combined_solution(sys, q, MeasureDatum{}, F, sched);
}

inline PolygonSolution maximal_solution(const RectilinearPolygon& poly, double q,
                                        const BoundarySet& F, int n_cells,
                                        const MaximalSchedule& sched = {}) {
  return maximal_solution(make_polygon_system(poly, n_cells), q, F, sched);
}

// Two-sided bracket for the solution with trace (nu, F):
//   max(V_nu, U_F) <= u <= V_nu + U_F,
// verified nodewise with a relative tolerance.  A violation is a solver bug
// by construction of the monotone scheme, hence an exception rather than a
// report entry.
struct SandwichReport {
  PolygonSolution combined;     // u with trace (nu, F)
  PolygonSolution measure_part; // V_nu
  PolygonSolution maximal_part; // U_F
  double worst_lower = 0.0;     // max over nodes of (max(V,U) - u) / scale
  double worst_upper = 0.0;     // max over nodes of (u - (V+U)) / scale
  double tolerance = 0.0;
};

inline SandwichReport sandwich_check(const RectilinearPolygon& poly, double q,
                                     const MeasureDatum& nu, const BoundarySet& F,
                                     int n_cells, const MaximalSchedule& sched = {},
                                     double tol = 1e-6) {
  const PolygonSystem sys = make_polygon_system(poly, n_cells);
  SandwichReport rep;
  rep.tolerance = tol;
  rep.measure_part = solve_measure_bvp(sys, q, nu);
  rep.maximal_part = maximal_solution(sys, q, F, sched);
  rep.combined = detail::combined_solution(sys, q, nu, F, sched);

  int worst_lower_node = 0, worst_upper_node = 0;
  for (int p = 0; p < sys.grid.size(); ++p) {
    const double V = rep.measure_part.u[p], U = rep.maximal_part.u[p];
    const double u = rep.combined.u[p];
    const double lower = (std::max(V, U) - u) / std::max(1.0, std::abs(std::max(V, U)));
    const double upper = (u - (V + U)) / std::max(1.0, std::abs(V + U));
    if (lower > rep.worst_lower) {
      rep.worst_lower = lower;
      worst_lower_node = p;
    }
    if (upper > rep.worst_upper) {
      rep.worst_upper = upper;
      worst_upper_node = p;
    }
  }
  auto fail = [&](const char* side, int p, double margin) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "sandwich: %s bound fails at node (%d, %d) by relative %.3e",
                  side, p % sys.grid.columns(), p / sys.grid.columns(), margin);
    throw SandwichViolation(buf);
  };
  if (rep.worst_lower > tol) fail("lower", worst_lower_node, rep.worst_lower);
  if (rep.worst_upper > tol) fail("upper", worst_upper_node, rep.worst_upper);
  return rep;
}

// Blow-up ceiling on a polygon solution: max over interior nodes of
// u * dist^beta against the planar absorption constant, with the exact
// distance to the boundary.
struct PolygonKellerOsserman {
  double max_product = 0.0;
  int ix = 0, iy = 0;
  double reference_constant = 0.0;
};

inline PolygonKellerOsserman verify_keller_osserman(const PolygonSolution& sol) {
  const double beta = 2.0 / (sol.q - 1.0);
  PolygonKellerOsserman rep;
  rep.reference_constant = std::pow(beta * beta, 1.0 / (sol.q - 1.0));
  for (int p = 0; p < sol.grid.size(); ++p) {
    if (!sol.grid.interior(p)) continue;
    const double d = sol.grid.poly.boundary_distance(sol.grid.node(p));
    const double product = sol.u[p] * std::pow(d, beta);
    if (product > rep.max_product) {
      rep.max_product = product;
      rep.ix = p % sol.grid.columns();
      rep.iy = p / sol.grid.columns();
    }
  }
  return rep;
}

// Weighted trace along shrinking inward offsets: the offset polygon at
// distance delta = m*h shares the parent lattice, so its boundary nodes carry
// parent values with no interpolation.  Each level solves a Laplace problem
// on the offset domain with data Z*u and reads the value at the basepoint.
inline RectilinearPolygon offset_polygon(const RectilinearPolygon& poly, double delta) {
  RectilinearPolygon out;
  const int n = poly.size();
  out.vertices.resize(n);
  for (int i = 0; i < n; ++i) {
    const Point2 din = poly.edge_direction(i - 1), dout = poly.edge_direction(i);
    // inward (left) normals of the two incident edges
    out.vertices[i] = {poly.vertex(i).x + delta * (-din.y - dout.y),
                       poly.vertex(i).y + delta * (din.x + dout.x)};
  }
  out.validate(); // too deep an offset collapses or crosses edges
  return out;
}

inline TraceSequence polygon_trace(const PolygonSolution& sol,
                                   const std::function<double(Point2)>& Z,
                                   const std::vector<int>& offsets,
                                   std::string label = "trace") {
  const PolygonGrid& grid = sol.grid;
  if (offsets.size() < 2)
    throw ValidationError("polygon_trace: need at least two offsets");
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (offsets[i] < 1)
      throw ValidationError("polygon_trace: offsets are positive cell counts");
    if (i > 0 && offsets[i] >= offsets[i - 1])
      throw ValidationError("polygon_trace: offsets must strictly decrease");
  }
  const Point2 x0 = grid.node(grid.basepoint);
  TraceSequence seq;
  seq.test_label = std::move(label);
  for (int m : offsets) {
    const RectilinearPolygon inner = offset_polygon(grid.poly, m * grid.h);
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const Point2& v : inner.vertices) {
      xmin = std::min(xmin, v.x);
      xmax = std::max(xmax, v.x);
      ymin = std::min(ymin, v.y);
      ymax = std::max(ymax, v.y);
    }
    const int cells = static_cast<int>(std::lround(std::max(xmax - xmin, ymax - ymin) / grid.h));
    const PolygonSystem level = make_polygon_system(inner, cells);
    std::vector<double> g(level.grid.size(), 0.0);
    for (int p = 0; p < level.grid.size(); ++p) {
      if (level.grid.kind[p] != NodeKind::Boundary) continue;
      const Point2 z = level.grid.node(p);
      const int parent = grid.locate(z);
      if (parent < 0)
        throw ConsistencyError("polygon_trace: offset boundary node fell off the parent lattice");
      g[p] = Z(z) * sol.u[parent];
    }
    const std::vector<double> ext = harmonic_extension(level, g);
    const int pb = level.grid.locate(x0);
    if (pb < 0 || !level.grid.interior(pb))
      throw ValidationError("polygon_trace: basepoint is not interior to the deepest offset");
    seq.values.push_back(ext[pb]);
  }
  const std::size_t m = seq.values.size();
  if (m >= 3)
    seq.limit_estimate =
        detail::aitken(seq.values[m - 3], seq.values[m - 2], seq.values[m - 1]);
  else
    seq.limit_estimate = seq.values.back();
  seq.diverging = detail::doubling_tail(seq.values);
  return seq;
}

// C^1 cap bump around a point of the plane, radius-normalized; the polygon
// counterpart of the spherical-cap bump used on cones.
inline std::function<double(Point2)> disc_bump(const Point2& center, double radius) {
  if (!(radius > 0.0)) throw ValidationError("disc_bump: radius must be positive");
  return [center, radius](Point2 x) {
    const double s = std::hypot(x.x - center.x, x.y - center.y) / radius;
    if (s >= 1.0) return 0.0;
    return s <= 0.5 ? 1.0 - 2.0 * s * s : 2.0 * (1.0 - s) * (1.0 - s);
  };
}

// Per-probe singularity flags on a polygon solution: trace the solution
// against a cap bump at each probe and report whether the capped sequence
// diverges along the offsets.
inline std::vector<bool> singular_mass_scan(const PolygonSolution& sol,
                                            const std::vector<int>& offsets,
                                            const std::vector<Point2>& probes,
                                            double cap_radius = 0.25) {
  std::vector<bool> flags;
  flags.reserve(probes.size());
  for (const Point2& probe : probes) {
    char label[64];
    std::snprintf(label, sizeof label, "cap x=%.3g y=%.3g", probe.x, probe.y);
    const TraceSequence seq =
        polygon_trace(sol, disc_bump(probe, cap_radius), offsets, label);
    flags.push_back(seq.diverging);
  }
  return flags;
}

} // namespace conetrace
