#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "conetrace/errors.hpp"
#include "conetrace/spectrum.hpp"

namespace conetrace {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Simple closed rectilinear polygon, counterclockwise, axis-aligned edges.
// Edge i runs from vertex i to vertex i+1 (mod n); the interior lies to the
// left of every edge.  Corners are strict quarter turns, so interior angles
// are pi/2 (convex) or 3 pi/2 (reentrant) and open edges carry angle pi.
struct RectilinearPolygon {
  std::vector<Point2> vertices;

  int size() const { return static_cast<int>(vertices.size()); }
  const Point2& vertex(int i) const {
    const int n = size();
    return vertices[((i % n) + n) % n];
  }
  Point2 edge_direction(int i) const {
    const Point2 &a = vertex(i), &b = vertex(i + 1);
    const double len = edge_length(i);
    return {(b.x - a.x) / len, (b.y - a.y) / len};
  }
  double edge_length(int i) const {
    const Point2 &a = vertex(i), &b = vertex(i + 1);
    return std::abs(b.x - a.x) + std::abs(b.y - a.y); // one term is zero
  }
  // Left turn at vertex i (cross product of the incoming and outgoing edge
  // directions) means a convex corner of a counterclockwise polygon.
  bool corner_convex(int i) const {
    const Point2 din = edge_direction(i - 1), dout = edge_direction(i);
    return din.x * dout.y - din.y * dout.x > 0.0;
  }
  double interior_angle(int i) const {
    return corner_convex(i) ? pi / 2.0 : 3.0 * pi / 2.0;
  }

  double area() const {
    double twice = 0.0;
    for (int i = 0; i < size(); ++i) {
      const Point2 &a = vertex(i), &b = vertex(i + 1);
      twice += a.x * b.y - b.x * a.y;
    }
    return twice / 2.0;
  }
  Point2 centroid() const {
    double cx = 0.0, cy = 0.0;
    for (int i = 0; i < size(); ++i) {
      const Point2 &a = vertex(i), &b = vertex(i + 1);
      const double w = a.x * b.y - b.x * a.y;
      cx += (a.x + b.x) * w;
      cy += (a.y + b.y) * w;
    }
    const double A = area();
    return {cx / (6.0 * A), cy / (6.0 * A)};
  }

  // Strict interior test for generic points (not meant for points on the
  // boundary): crossing parity of the +x ray against the vertical edges,
  // half-open in y so rays through vertices are counted once.
  bool contains(const Point2& p) const {
    bool inside = false;
    for (int i = 0; i < size(); ++i) {
      const Point2 &a = vertex(i), &b = vertex(i + 1);
      if (a.x != b.x) continue;
      const double ylo = std::min(a.y, b.y), yhi = std::max(a.y, b.y);
      if (ylo <= p.y && p.y < yhi && a.x > p.x) inside = !inside;
    }
    return inside;
  }

  double boundary_distance(const Point2& p) const {
    double best = 1e300;
    for (int i = 0; i < size(); ++i) {
      const Point2 &a = vertex(i), &b = vertex(i + 1);
      const double dx = b.x - a.x, dy = b.y - a.y;
      const double len2 = dx * dx + dy * dy;
      double s = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
      s = std::clamp(s, 0.0, 1.0);
      const double ex = p.x - (a.x + s * dx), ey = p.y - (a.y + s * dy);
      best = std::min(best, std::hypot(ex, ey));
    }
    return best;
  }

  void validate() const {
    const int n = size();
    if (n < 4)
      throw InvalidPolygon("polygon: a rectilinear polygon needs at least four vertices");
    if (n % 2 != 0)
      throw InvalidPolygon("polygon: a closed rectilinear loop has an even vertex count");
    for (int i = 0; i < n; ++i) {
      const Point2 &a = vertex(i), &b = vertex(i + 1);
      const bool horizontal = a.y == b.y && a.x != b.x;
      const bool vertical = a.x == b.x && a.y != b.y;
      if (!horizontal && !vertical)
        throw InvalidPolygon("polygon: edge " + std::to_string(i) +
                             " is not axis-parallel (or has zero length)");
    }
    for (int i = 0; i < n; ++i) {
      const Point2 &a = vertex(i), &b = vertex(i + 1);
      if ((a.x == b.x) == (vertex(i + 1).x == vertex(i + 2).x))
        throw InvalidPolygon("polygon: consecutive edges " + std::to_string(i) +
                             " collinear; merge them into one edge");
    }
    // simplicity: non-adjacent edges must not touch; adjacent ones only at
    // the shared vertex (guaranteed by the turn check above)
    for (int i = 0; i < n; ++i)
      for (int j = i + 2; j < n; ++j) {
        if (i == 0 && j == n - 1) continue;
        if (detailed_overlap(i, j))
          throw InvalidPolygon("polygon: edges " + std::to_string(i) + " and " +
                               std::to_string(j) + " intersect; not simple");
      }
    if (!(area() > 0.0))
      throw InvalidPolygon("polygon: vertices must wind counterclockwise");
  }

private:
  bool detailed_overlap(int i, int j) const {
    auto span = [](double a, double b) {
      return std::pair<double, double>{std::min(a, b), std::max(a, b)};
    };
    const Point2 &a = vertex(i), &b = vertex(i + 1);
    const Point2 &c = vertex(j), &d = vertex(j + 1);
    const auto [ax0, ax1] = span(a.x, b.x);
    const auto [ay0, ay1] = span(a.y, b.y);
    const auto [bx0, bx1] = span(c.x, d.x);
    const auto [by0, by1] = span(c.y, d.y);
    return ax0 <= bx1 && bx0 <= ax1 && ay0 <= by1 && by0 <= ay1;
  }
};

enum class FeatureKind { Corner, EdgePoint };

// One boundary feature with its critical absorption exponent, computed from
// the planar-arc eigenvalue of the tangent wedge: lambda = (pi/omega)^2,
// alpha the positive root of X^2 - lambda, q_c = 1 + 2/alpha = 1 + 2 omega/pi.
struct BoundaryFeature {
  FeatureKind kind = FeatureKind::Corner;
  int index = 0; // vertex index for corners, edge index for edge points
  Point2 location;
  double interior_angle = 0.0;
  double q_c = 0.0;
};

inline double critical_exponent_of_opening(double omega) {
  const AxisymmetricOpening wedge{2, omega};
  wedge.validate();
  return exponents(*lambda_exact(wedge), 2).q_S;
}

// Corners plus one representative per open edge (its midpoint); every
// rectilinear feature lands on q_c in {2, 3, 4}.
inline std::vector<BoundaryFeature> feature_exponents(const RectilinearPolygon& poly) {
  poly.validate();
  std::vector<BoundaryFeature> features;
  features.reserve(2 * poly.size());
  for (int i = 0; i < poly.size(); ++i) {
    const double omega = poly.interior_angle(i);
    features.push_back({FeatureKind::Corner, i, poly.vertex(i), omega,
                        critical_exponent_of_opening(omega)});
  }
  for (int i = 0; i < poly.size(); ++i) {
    const Point2 &a = poly.vertex(i), &b = poly.vertex(i + 1);
    features.push_back({FeatureKind::EdgePoint, i,
                        {(a.x + b.x) / 2.0, (a.y + b.y) / 2.0}, pi,
                        critical_exponent_of_opening(pi)});
  }
  return features;
}

// A boundary set: whole corners plus closed arc-length spans [s0, s1] along
// edges (s measured from the edge's start vertex).
struct EdgeSpan {
  int edge = 0;
  double s0 = 0.0;
  double s1 = 0.0;
};

struct BoundarySet {
  std::vector<int> corners;
  std::vector<EdgeSpan> edges;

  bool empty() const { return corners.empty() && edges.empty(); }
};

inline void validate_boundary_set(const RectilinearPolygon& poly, const BoundarySet& set) {
  for (int c : set.corners)
    if (c < 0 || c >= poly.size())
      throw ValidationError("boundary set: corner index out of range");
  for (const EdgeSpan& span : set.edges) {
    if (span.edge < 0 || span.edge >= poly.size())
      throw ValidationError("boundary set: edge index out of range");
    if (!(span.s0 >= 0.0) || !(span.s1 > span.s0) ||
        !(span.s1 <= poly.edge_length(span.edge) + 1e-12))
      throw ValidationError("boundary set: span must satisfy 0 <= s0 < s1 <= edge length");
  }
}

inline BoundarySet whole_boundary(const RectilinearPolygon& poly) {
  BoundarySet set;
  for (int i = 0; i < poly.size(); ++i) {
    set.corners.push_back(i);
    set.edges.push_back({i, 0.0, poly.edge_length(i)});
  }
  return set;
}

inline Point2 edge_point(const RectilinearPolygon& poly, int edge, double s) {
  const Point2& a = poly.vertex(edge);
  const Point2 d = poly.edge_direction(edge);
  return {a.x + s * d.x, a.y + s * d.y};
}

inline double set_distance(const RectilinearPolygon& poly, const BoundarySet& set,
                           const Point2& z) {
  double best = 1e300;
  for (int c : set.corners) {
    const Point2& v = poly.vertex(c);
    best = std::min(best, std::hypot(z.x - v.x, z.y - v.y));
  }
  for (const EdgeSpan& span : set.edges) {
    const Point2 p0 = edge_point(poly, span.edge, span.s0);
    const Point2 p1 = edge_point(poly, span.edge, span.s1);
    const double dx = p1.x - p0.x, dy = p1.y - p0.y;
    const double len2 = dx * dx + dy * dy;
    double s = len2 > 0.0 ? ((z.x - p0.x) * dx + (z.y - p0.y) * dy) / len2 : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    best = std::min(best, std::hypot(z.x - (p0.x + s * dx), z.y - (p0.y + s * dy)));
  }
  return best;
}

// Enlarge a set along the boundary by r: spans stretch within their edges,
// corners grow spans onto both incident edges, and a span reaching a vertex
// absorbs that corner.  Nested in r, which is what the thickening law tests.
inline BoundarySet thicken(const RectilinearPolygon& poly, const BoundarySet& set,
                           double r) {
  if (!(r >= 0.0)) throw ValidationError("thicken: radius must be nonnegative");
  BoundarySet out = set;
  const int n = poly.size();
  for (int c : set.corners) {
    out.edges.push_back({c, 0.0, std::min(r, poly.edge_length(c))});
    const int in = ((c - 1) % n + n) % n;
    const double len = poly.edge_length(in);
    out.edges.push_back({in, std::max(0.0, len - r), len});
  }
  for (const EdgeSpan& span : set.edges) {
    const double len = poly.edge_length(span.edge);
    EdgeSpan wide{span.edge, std::max(0.0, span.s0 - r), std::min(len, span.s1 + r)};
    out.edges.push_back(wide);
    if (wide.s0 == 0.0) out.corners.push_back(span.edge);
    if (wide.s1 == len) out.corners.push_back((span.edge + 1) % n);
  }
  return out;
}

namespace detail {

// Smallest clearance that keeps a ball B_r(z) at a boundary point clean: at
// most the edge through z and one adjacent corner intersect it.  Bounded by
// half the shortest edge and half the closest approach between non-adjacent
// edges.
inline double safe_radius(const RectilinearPolygon& poly) {
  const int n = poly.size();
  double r = 1e300;
  for (int i = 0; i < n; ++i) r = std::min(r, poly.edge_length(i) / 2.0);
  auto point_segment = [&](const Point2& p, int j) {
    const Point2 &a = poly.vertex(j), &b = poly.vertex(j + 1);
    const double dx = b.x - a.x, dy = b.y - a.y;
    double s = ((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy);
    s = std::clamp(s, 0.0, 1.0);
    return std::hypot(p.x - (a.x + s * dx), p.y - (a.y + s * dy));
  };
  // non-crossing axis-aligned segments attain their gap at an endpoint of one
  // against the other
  auto segment_gap = [&](int i, int j) {
    double best = 1e300;
    for (int k : {i, j})
      for (int e : {0, 1}) {
        const Point2& p = poly.vertex(k + e);
        best = std::min(best, point_segment(p, k == i ? j : i));
      }
    return best;
  };
  for (int i = 0; i < n; ++i)
    for (int j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      r = std::min(r, segment_gap(i, j) / 2.0);
    }
  return r;
}

} // namespace detail

// Opening of the largest cone with vertex at the edge point (edge, s) whose
// intersection with B_r stays inside the polygon.  With r below the safe
// radius the only obstruction is a convex corner at the near end of the edge:
// it clips the half-plane by the angle arccos(d/r) subtended inside the ball.
inline double inscribed_cone_opening(const RectilinearPolygon& poly, int edge,
                                     double s, double r) {
  const double len = poly.edge_length(edge);
  if (!(s > 0.0) || !(s < len))
    throw ValidationError("inscribed_cone_opening: s must be interior to the edge");
  if (!(r > 0.0) || r > detail::safe_radius(poly))
    throw ValidationError("inscribed_cone_opening: radius exceeds the safe clearance");
  double theta = pi;
  const int n = poly.size();
  if (s < r && poly.corner_convex(edge)) theta -= std::acos(s / r);
  if (len - s < r && poly.corner_convex((edge + 1) % n))
    theta -= std::acos((len - s) / r);
  return theta;
}

// Brute-force counterpart: scan directions at a fixed angular step (staggered
// off the axes) and return the longest contiguous run whose radius-r segment
// stays inside.  This is the validation oracle for the exact case analysis.
inline double inscribed_cone_opening_brute(const RectilinearPolygon& poly,
                                           const Point2& z, double r,
                                           double step = pi / 180.0) {
  if (!(r > 0.0)) throw ValidationError("inscribed_cone_opening_brute: radius must be positive");
  if (!(step > 0.0)) throw ValidationError("inscribed_cone_opening_brute: step must be positive");
  const int m = std::max(8, static_cast<int>(std::ceil(2.0 * pi / step)));
  auto segment_inside = [&](double phi) {
    const Point2 b{z.x + r * std::cos(phi), z.y + r * std::sin(phi)};
    for (int i = 0; i < poly.size(); ++i) {
      const Point2 &c = poly.vertex(i), &d = poly.vertex(i + 1);
      // proper crossing of z->b with the axis-aligned edge c->d
      const double ex = d.x - c.x, ey = d.y - c.y;
      const double sx = b.x - z.x, sy = b.y - z.y;
      const double den = sx * ey - sy * ex;
      if (den == 0.0) continue; // parallel; staggered steps avoid collinearity
      const double t = ((c.x - z.x) * ey - (c.y - z.y) * ex) / den;
      const double w = ((c.x - z.x) * sy - (c.y - z.y) * sx) / den;
      if (t > 1e-9 && t <= 1.0 && w >= -1e-12 && w <= 1.0 + 1e-12) return false;
    }
    return poly.contains({z.x + 0.5 * r * std::cos(phi), z.y + 0.5 * r * std::sin(phi)});
  };
  std::vector<char> good(m);
  int total = 0;
  for (int i = 0; i < m; ++i) {
    good[i] = segment_inside((i + 0.5) * (2.0 * pi / m)) ? 1 : 0;
    total += good[i];
  }
  if (total == m) return 2.0 * pi;
  // longest circular run of admissible directions
  int best = 0, run = 0;
  for (int i = 0; i < 2 * m; ++i) {
    run = good[i % m] ? run + 1 : 0;
    best = std::max(best, std::min(run, m));
  }
  return best * (2.0 * pi / m);
}

struct QStarSchedule {
  double r0 = 0.0;       // first radius; <= 0 requests the safe clearance
  int steps = 6;         // halvings of the radius
  int edge_samples = 512; // boundary samples per edge
};

namespace detail {

// Shared scan for q*(E): inf of q(theta(z, r)) over corners and edge samples
// within distance r of E, along a halving radius schedule.  The inf is
// nondecreasing as r shrinks (both the sample range and the corner clipping
// relax), so the last value is the stabilized limit.
template <typename OpeningFn>
double q_star_scan(const RectilinearPolygon& poly, const BoundarySet& set,
                   const QStarSchedule& schedule, OpeningFn&& opening) {
  poly.validate();
  validate_boundary_set(poly, set);
  if (set.empty()) throw ValidationError("q_star: boundary set is empty");
  if (schedule.steps < 1 || schedule.edge_samples < 16)
    throw ValidationError("q_star: schedule needs >= 1 step and >= 16 samples per edge");
  const double r_safe = detail::safe_radius(poly);
  double r = schedule.r0 > 0.0 ? schedule.r0 : r_safe;
  if (r > r_safe) throw ValidationError("q_star: r0 exceeds the safe clearance");

  double q_last = 0.0;
  for (int step = 0; step < schedule.steps; ++step, r /= 2.0) {
    double worst = 1e300;
    for (int c = 0; c < poly.size(); ++c)
      if (set_distance(poly, set, poly.vertex(c)) < r)
        worst = std::min(worst,
                         critical_exponent_of_opening(poly.interior_angle(c)));
    for (int e = 0; e < poly.size(); ++e) {
      const double len = poly.edge_length(e);
      for (int mIdx = 0; mIdx < schedule.edge_samples; ++mIdx) {
        const double s = (mIdx + 0.5) * len / schedule.edge_samples;
        if (set_distance(poly, set, edge_point(poly, e, s)) >= r) continue;
        worst = std::min(worst, critical_exponent_of_opening(opening(e, s, r)));
      }
    }
    if (!(worst < 1e300))
      throw ValidationError("q_star: no boundary sample within the current radius; "
                            "increase edge_samples or shorten the schedule");
    q_last = worst;
  }
  return q_last;
}

} // namespace detail

// q*(E): the stabilized infimum of nearby inscribed-cone exponents, with the
// opening computed by exact case analysis.
inline double q_star(const RectilinearPolygon& poly, const BoundarySet& set,
                     const QStarSchedule& schedule = {}) {
  return detail::q_star_scan(poly, set, schedule,
                             [&](int edge, double s, double r) {
                               return inscribed_cone_opening(poly, edge, s, r);
                             });
}

// Same scan with the angular brute-force opening; the acceptance suite checks
// the two agree within one angular sampling step.
inline double q_star_brute(const RectilinearPolygon& poly, const BoundarySet& set,
                           QStarSchedule schedule = {}, double step = pi / 180.0) {
  if (schedule.edge_samples > 64) schedule.edge_samples = 64; // the scan is O(samples * directions)
  return detail::q_star_scan(poly, set, schedule,
                             [&](int edge, double s, double r) {
                               return inscribed_cone_opening_brute(
                                   poly, edge_point(poly, edge, s), r, step);
                             });
}

// Aggregated criticality data for reporting: features, q* per requested set,
// and admissibility-mass trends, if computed.
struct QStarEntry {
  std::string label;
  double value = 0.0;
};

struct MassTrend {
  Point2 feature;
  double q = 0.0;
  std::vector<int> levels; // quadrature resolutions behind each mass
  std::vector<double> masses;
  double trend = 0.0; // last mass / previous mass
};

struct CriticalityReport {
  std::vector<BoundaryFeature> features;
  std::vector<QStarEntry> q_stars;
  std::vector<MassTrend> masses;
};

} // namespace conetrace
