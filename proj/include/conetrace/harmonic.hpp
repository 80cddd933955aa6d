#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "conetrace/banded.hpp"
#include "conetrace/grid.hpp"
#include "conetrace/spectrum.hpp"

namespace conetrace {

// Dirichlet data on the three data-carrying sides of the log-cylinder
// rectangle (t, theta) in (0, T) x (0, L).  The theta = 0 side is the
// symmetry axis and carries no data.  outer = the t = 0 face (the unit
// sphere), indexed per theta cell; lateral = the theta = L face, indexed per
// t cell; truncation = the t = T face, indexed per theta cell.
struct CylinderData {
  std::vector<double> outer;
  std::vector<double> lateral;
  std::vector<double> truncation;
};

// Evaluate a cell-centered field on the axis theta = 0 at depth t: quadratic
// even extension across the axis in theta, linear interpolation in t.
inline double axis_value(const TensorGrid2D& grid, const std::vector<double>& field,
                         double t) {
  if (field.size() != grid.size())
    throw ValidationError("axis_value: field does not match the grid");
  if (grid.theta.n_cells < 2)
    throw ValidationError("axis_value: needs at least two theta cells");
  const Grid1D& gt = grid.t;
  auto row_axis = [&](int i) {
    const double f0 = field[grid.index(i, 0)];
    const double f1 = field[grid.index(i, 1)];
    return (9.0 * f0 - f1) / 8.0;
  };
  if (t <= gt.center(0)) return row_axis(0);
  if (t >= gt.center(gt.n_cells - 1)) return row_axis(gt.n_cells - 1);
  const int i = std::min(int((t - gt.center(0)) / gt.h()), gt.n_cells - 2);
  const double s = (t - gt.center(i)) / gt.h();
  return (1.0 - s) * row_axis(i) + s * row_axis(i + 1);
}

// Harmonic Dirichlet solver on the truncated cone in log-cylinder form.
// Multiplying r^2 Delta u = u_tt + (2-N) u_t + Delta' u by e^{(2-N)t} puts the
// axial part in divergence form,
//   (e^{(2-N)t} u_t)_t + e^{(2-N)t} (1/w)(w u_theta)_theta = 0,
// and scaling each row by w(theta_j) makes the stencil symmetric.  Constants
// lie in the kernel of every interior row and every closure row exactly, so
// harmonic measure computed from indicator data is calibrated to rounding
// accuracy.  The operator factors once; solves per datum are back-substitutions.
class HarmonicCylinder {
public:
  HarmonicCylinder(const AxisymmetricOpening& opening, const TensorGrid2D& grid)
      : opening_(opening), grid_(grid) {
    opening_.validate();
    if (grid_.t.n_cells < 4 || grid_.theta.n_cells < 4)
      throw ValidationError("HarmonicCylinder: grid too coarse");
    if (std::abs(grid_.theta.a) > 1e-14 ||
        std::abs(grid_.theta.b - opening_.reduced_angle()) > 1e-12)
      throw ValidationError("HarmonicCylinder: theta grid must span the reduced opening");
    assemble();
    chol_.emplace(A_);
  }

  const TensorGrid2D& grid() const { return grid_; }
  const BandedOperator& op() const { return A_; }
  const std::vector<double>& theta_weights() const { return wc_; }

  CylinderData zero_data() const {
    return {std::vector<double>(grid_.theta.n_cells, 0.0),
            std::vector<double>(grid_.t.n_cells, 0.0),
            std::vector<double>(grid_.theta.n_cells, 0.0)};
  }

  // Boundary contribution of the half-cell Dirichlet closures, as a right-hand
  // side vector for the assembled operator.
  std::vector<double> rhs(const CylinderData& data) const {
    const int nt = grid_.t.n_cells, ntheta = grid_.theta.n_cells;
    if (static_cast<int>(data.outer.size()) != ntheta ||
        static_cast<int>(data.lateral.size()) != nt ||
        static_cast<int>(data.truncation.size()) != ntheta)
      throw ValidationError("HarmonicCylinder::rhs: data sides do not match the grid");
    const double ht2 = grid_.t.h() * grid_.t.h();
    const double hth2 = grid_.theta.h() * grid_.theta.h();
    std::vector<double> b(grid_.size(), 0.0);
    for (int j = 0; j < ntheta; ++j) {
      b[grid_.index(0, j)] += 2.0 * axial_face(0) * wc_[j] / ht2 * data.outer[j];
      b[grid_.index(nt - 1, j)] +=
          2.0 * axial_face(nt) * wc_[j] / ht2 * data.truncation[j];
    }
    const double wlat = wf_.back();
    for (int i = 0; i < nt; ++i)
      b[grid_.index(i, ntheta - 1)] +=
          2.0 * axial_center(i) * wlat / hth2 * data.lateral[i];
    return b;
  }

  std::vector<double> solve(const CylinderData& data) const {
    return chol_->solve(rhs(data));
  }

private:
  double axial_face(int i) const {
    return std::exp((2.0 - opening_.dim) * grid_.t.face(i));
  }
  double axial_center(int i) const {
    return std::exp((2.0 - opening_.dim) * grid_.t.center(i));
  }

  void assemble() {
    const int nt = grid_.t.n_cells, ntheta = grid_.theta.n_cells;
    const double ht2 = grid_.t.h() * grid_.t.h();
    const double hth2 = grid_.theta.h() * grid_.theta.h();
    const double p = opening_.weight_exponent();
    auto w_at = [&](double theta) {
      return p == 0.0 ? 1.0 : std::pow(std::sin(theta), p);
    };
    wc_.resize(ntheta);
    wf_.resize(ntheta + 1);
    for (int j = 0; j < ntheta; ++j) wc_[j] = w_at(grid_.theta.center(j));
    for (int j = 0; j <= ntheta; ++j) wf_[j] = w_at(grid_.theta.face(j));

    A_ = BandedOperator(static_cast<int>(grid_.size()), ntheta);
    A_.symmetric = true;
    for (int i = 0; i < nt; ++i) {
      const double am = axial_face(i), ap = axial_face(i + 1);
      const double ac = axial_center(i);
      for (int j = 0; j < ntheta; ++j) {
        const int row = static_cast<int>(grid_.index(i, j));
        double diag = 0.0;
        if (i > 0) {
          A_.at(row, row - ntheta) = -am * wc_[j] / ht2;
          diag += am * wc_[j] / ht2;
        } else {
          diag += 2.0 * am * wc_[j] / ht2;
        }
        if (i + 1 < nt) {
          A_.at(row, row + ntheta) = -ap * wc_[j] / ht2;
          diag += ap * wc_[j] / ht2;
        } else {
          diag += 2.0 * ap * wc_[j] / ht2;
        }
        if (j > 0) {
          A_.at(row, row - 1) = -ac * wf_[j] / hth2;
          diag += ac * wf_[j] / hth2;
        }
        // j == 0: the axis face carries zero flux, as in the 1D assembly.
        if (j + 1 < ntheta) {
          A_.at(row, row + 1) = -ac * wf_[j + 1] / hth2;
          diag += ac * wf_[j + 1] / hth2;
        } else {
          diag += 2.0 * ac * wf_[ntheta] / hth2;
        }
        A_.at(row, row) = diag;
      }
    }
  }

  AxisymmetricOpening opening_;
  TensorGrid2D grid_;
  std::vector<double> wc_, wf_;
  BandedOperator A_;
  std::optional<BandedCholesky> chol_;
};

} // namespace conetrace
