#pragma once

#include <cstddef>
#include <vector>

#include "conetrace/errors.hpp"

namespace conetrace {

// Uniform cell-centered grid on (a, b): n_cells cells, centers at
// a + (j + 1/2) h.  Boundary values live on the faces a and b, never on a
// sample point, which keeps weights like sin^{N-2}(theta) away from their
// poles.
struct Grid1D {
  double a = 0.0;
  double b = 1.0;
  int n_cells = 0;

  Grid1D() = default;
  Grid1D(double a_, double b_, int n) : a(a_), b(b_), n_cells(n) {
    if (!(b > a)) throw ValidationError("Grid1D: requires b > a");
    if (n < 1) throw ValidationError("Grid1D: requires n_cells >= 1");
  }

  double h() const { return (b - a) / n_cells; }
  double center(int j) const { return a + (j + 0.5) * h(); }
  double face(int j) const { return a + j * h(); }

  std::vector<double> centers() const {
    std::vector<double> c(n_cells);
    for (int j = 0; j < n_cells; ++j) c[j] = center(j);
    return c;
  }
};

// Tensor grid for the log-cylinder rectangle: t along the axis direction
// (t = -log r in (0, T)), theta across the opening.  Row-major with theta
// fastest: index(i, j) = i * theta.n_cells + j.
struct TensorGrid2D {
  Grid1D t;
  Grid1D theta;

  TensorGrid2D() = default;
  TensorGrid2D(Grid1D t_, Grid1D th) : t(t_), theta(th) {}

  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * theta.n_cells + j;
  }
  std::size_t size() const {
    return static_cast<std::size_t>(t.n_cells) * theta.n_cells;
  }
};

} // namespace conetrace
