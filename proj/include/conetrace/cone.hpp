#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "conetrace/banded.hpp"
#include "conetrace/grid.hpp"
#include "conetrace/harmonic.hpp"
#include "conetrace/newton.hpp"
#include "conetrace/profile.hpp"
#include "conetrace/spectrum.hpp"

namespace conetrace {

// A point of the truncated cone in log-cylinder coordinates: r = e^{-t},
// theta measured from the axis (bisector for N = 2).
struct ConePoint {
  double t = 0.0;
  double theta = 0.0;
};

// The reference point: on the axis at r = 1/2.  Kernel normalization, Dirac
// masses, and removability probes all use this point.
inline ConePoint reference_point() { return {std::log(2.0), 0.0}; }

// Harmonic kernel of the truncated cone, tabulated on t-faces x theta-centers
// so the r = 1 row is represented exactly.  Phi = r^{-alpha} phi is the
// singular harmonic, Phi_tilde = r^{alpha_tilde} phi the regular one; their
// normalized difference Psi = (Phi - Phi_tilde)/gamma vanishes on the outer
// sphere, blows up at the vertex, and is calibrated so Psi(x0) = 1, which
// makes its boundary trace the unit Dirac at the vertex relative to harmonic
// measure at x0.
struct KernelLift {
  AxisymmetricOpening opening;
  double q_context = 0.0;
  ExponentTriple exponents;
  TensorGrid2D grid;           // the cell grid the tabulation refers to
  std::vector<double> phi;     // eigenfunction at theta centers, pole value 1
  std::vector<double> Phi;     // face-row tabulations, theta fastest
  std::vector<double> Phi_tilde;
  std::vector<double> Psi;
  double gamma = 0.0;
  ConePoint x0 = reference_point();

  int face_rows() const { return grid.t.n_cells + 1; }
  std::size_t findex(int i, int j) const {
    return static_cast<std::size_t>(i) * grid.theta.n_cells + j;
  }
};

// Solution of -Delta u + |u|^{q-1} u = 0 on the truncated cone, stored as the
// transformed unknown v = r^alpha u at cell centers (theta fastest).  k is the
// vertex Dirac mass; it is absent for the strong-singularity limit candidate.
// The trailing block records the transform actually used by the solve; all of
// it is reconstructible from (opening, q, grid), so persistence only stores
// the meta block and the samples.
struct ConeSolution {
  AxisymmetricOpening opening;
  double q = 0.0;
  TensorGrid2D grid;
  std::vector<double> v;
  std::optional<double> k;
  double T = 0.0;
  NewtonReport newton; // final_residual_sup is row-relative (see absorption_solve)

  ExponentTriple exponents;  // consistent with lambda_theta below
  double lambda_theta = 0.0; // discrete first eigenvalue on this theta grid
  double c = 0.0;            // axial drift alpha + alpha_tilde
  double mu = 0.0;           // discrete axial rate of the kernel lift
  double gamma_hat = 0.0;    // discrete kernel normalization at x0
  double gamma = 0.0;        // analytic kernel normalization (k = k* gamma)
  std::vector<double> phi;   // theta eigenvector at centers, pole value 1
};

enum class FitMode { Weak, Strong };

// Cross-section profiles the asymptotic fit compares against: phi is the
// first eigenfunction (pole value 1), omega the singular nonlinear profile;
// omega may be empty when only the weak fit is requested.  Both live on the
// solution's theta centers.
struct FitProfiles {
  std::vector<double> phi;
  std::vector<double> omega;
};

struct AsymptoticFit {
  FitMode mode = FitMode::Weak;
  double fitted_amplitude = 0.0; // weak: k* estimate; strong: mean profile distance
  double window_lo = 0.0;        // t-interval used; depends on the fit mode
  double window_hi = 0.0;
  double drift = 0.0;            // max - min of the per-row value across the window
};

enum class SolutionClass { Bounded, WeakSingularity, StrongSingularity };

struct Classification {
  SolutionClass kind = SolutionClass::Bounded;
  std::optional<double> k; // recovered Dirac mass k* gamma for the weak class
  AsymptoticFit fit;
};

struct ClassifyTolerances {
  double bounded_vanish = 1e-9; // sup |v| below this scale-adjusted level => Bounded
  double strong_rel = 0.05;     // profile distance per unit of max omega_S
};

struct KellerOssermanReport {
  double max_product = 0.0;        // max over nodes of u * dist^{2/(q-1)}
  int t_index = 0;                 // node attaining it
  int theta_index = 0;
  double reference_constant = 0.0; // 1D blow-up constant (2(q+1)/(q-1)^2)^{1/(q-1)}
};

// Schedule for the strong-singularity limit: k = k0 * 2^j.  k0 <= 0 requests
// the automatic choice, scaled so the whole grid is absorption-saturated a few
// doublings in.  The solve stops when the mid-cylinder slice of r^{2/(q-1)} u
// moves by less than slice_tol relative to max(1, its own sup).
struct DoublingSchedule {
  double k0 = 0.0;
  int max_doublings = 20;
  double slice_tol = 1e-4;
};

inline TensorGrid2D make_cone_grid(const AxisymmetricOpening& opening, double T,
                                   int nt, int ntheta) {
  opening.validate();
  if (!(T > 0.0)) throw ValidationError("make_cone_grid: T must be positive");
  return {Grid1D(0.0, T, nt), Grid1D(0.0, opening.reduced_angle(), ntheta)};
}

namespace detail {

inline void check_cone_grid(const AxisymmetricOpening& opening,
                            const TensorGrid2D& grid) {
  if (grid.t.n_cells < 16 || grid.theta.n_cells < 16)
    throw ValidationError("cone grid: needs at least 16 cells per direction");
  if (std::abs(grid.t.a) > 1e-14)
    throw ValidationError("cone grid: t must start at the outer sphere t = 0");
  if (std::abs(grid.theta.a) > 1e-14 ||
      std::abs(grid.theta.b - opening.reduced_angle()) > 1e-12)
    throw ValidationError("cone grid: theta must span the reduced opening");
}

// Pole value of a cell-centered eigenvector: quadratic even extension, the
// same stencil axis_value uses.
inline double pole_value(const std::vector<double>& f) {
  return (9.0 * f[0] - f[1]) / 8.0;
}

// Everything one transformed cone solve needs.  The unknown is the
// symmetrized variable z = e^{c t / 2} v; the operator
//   A z = -z_tt + (c^2/4 - lambda) z - (1/w)(w z_theta)_theta,
// with each row scaled by w(theta_j), is symmetric positive definite with
// nonpositive off-diagonal entries, and the equation reads
//   A z + w e^{kappa t} |z|^{q-1} z = 0,  kappa = (q-1)(N-2)/2 - 2.
// The Dirac mass enters as the inhomogeneous Dirichlet value 2 sinh(mu T) /
// gamma_hat at the truncation face (the kernel lift evaluated there); the
// remainder is zero on the whole discrete boundary.  The theta block is
// embedded bit-for-bit from the 1D eigenvalue assembly, so the discrete
// eigenvector phi is exact for it, and the axial rate mu is cosh-adjusted so
// that zhat, the lift's cell-center tabulation below, is the EXACT discrete
// solution of that Dirichlet problem: sinh solves the three-point recurrence
// at every interior row, the t = 0 closure row annihilates it because the
// mirrored ghost -zhat_0 is its genuine odd continuation, and at the t = T
// closure row the identity
//   g(T - h/2) + g(T + h/2) = 2 g(T) cosh(mu h / 2),   g = 2 sinh(mu .) / gh,
// makes A zhat equal exactly the closure's load 2 w g(T) / h^2 once the
// centers are divided by cosh(mu h / 2).  That load is kept as sigma (per
// unit mass); A zhat = sigma holds to rounding and the remainder equation
// needs no right-hand side at all.
struct CylinderSystem {
  AxisymmetricOpening opening;
  double q = 0.0;
  TensorGrid2D grid;
  SLProblem sl;
  double lambda_h = 0.0;
  std::vector<double> phi;
  ExponentTriple expo;
  double c = 0.0;
  double mu = 0.0;
  double gamma_hat = 0.0;
  double kappa = 0.0;
  BandedOperator A;
  std::vector<double> nl_mass; // w_j e^{kappa t_i}
  std::vector<double> zhat;    // unit-mass kernel lift at centers, z units
  std::vector<double> sigma;   // A zhat = the lift's Dirichlet load, last t row only
};

inline CylinderSystem make_cylinder_system(const AxisymmetricOpening& opening,
                                           double q, const TensorGrid2D& grid) {
  check_cone_grid(opening, grid);
  CylinderSystem sys;
  sys.opening = opening;
  sys.q = q;
  sys.grid = grid;
  sys.sl = assemble_sl(opening, grid.theta.n_cells);
  EigenResult eig = smallest_eigenpair(sys.sl.A, sys.sl.mass, 1e-13);
  sys.lambda_h = eig.lambda;
  sys.phi = std::move(eig.vector);
  const double pole = pole_value(sys.phi);
  for (double& p : sys.phi) p /= pole;
  sys.expo = exponents(sys.lambda_h, opening.dim);
  sys.c = sys.expo.alpha + sys.expo.alpha_tilde;

  const int nt = grid.t.n_cells, ntheta = grid.theta.n_cells;
  const double ht = grid.t.h();
  const double m2 = sys.c * sys.c / 4.0 - sys.lambda_h; // = ((N-2)/2)^2
  const double s2 = m2 + sys.lambda_h;                  // = c^2/4, kept consistent
  sys.mu = 2.0 / ht * std::asinh(ht * std::sqrt(s2) / 2.0);
  const double ln2 = std::log(2.0);
  sys.gamma_hat = std::pow(2.0, sys.expo.alpha) * std::exp(-sys.c * ln2 / 2.0) *
                  2.0 * std::sinh(sys.mu * ln2);
  sys.kappa = 0.5 * (q - 1.0) * (opening.dim - 2.0) - 2.0;

  const double ht2 = ht * ht;
  sys.A = BandedOperator(static_cast<int>(grid.size()), ntheta);
  sys.A.symmetric = true;
  sys.nl_mass.resize(grid.size());
  for (int i = 0; i < nt; ++i) {
    const double Ei = std::exp(sys.kappa * grid.t.center(i));
    for (int j = 0; j < ntheta; ++j) {
      const int row = static_cast<int>(grid.index(i, j));
      const double w = sys.sl.mass[j];
      sys.nl_mass[row] = w * Ei;
      double diag = sys.sl.A.at(j, j) + w * m2;
      if (j > 0) sys.A.at(row, row - 1) = sys.sl.A.at(j, j - 1);
      if (j + 1 < ntheta) sys.A.at(row, row + 1) = sys.sl.A.at(j, j + 1);
      if (i > 0) {
        sys.A.at(row, row - ntheta) = -w / ht2;
        diag += w / ht2;
      } else {
        diag += 2.0 * w / ht2;
      }
      if (i + 1 < nt) {
        sys.A.at(row, row + ntheta) = -w / ht2;
        diag += w / ht2;
      } else {
        diag += 2.0 * w / ht2;
      }
      sys.A.at(row, row) = diag;
    }
  }

  sys.zhat.resize(grid.size());
  const double ch = std::cosh(sys.mu * ht / 2.0);
  for (int i = 0; i < nt; ++i) {
    const double g =
        2.0 * std::sinh(sys.mu * grid.t.center(i)) / (sys.gamma_hat * ch);
    for (int j = 0; j < ntheta; ++j) sys.zhat[grid.index(i, j)] = g * sys.phi[j];
  }
  sys.sigma.assign(grid.size(), 0.0);
  const double g_face = 2.0 * std::sinh(sys.mu * grid.t.b) / sys.gamma_hat;
  for (int j = 0; j < ntheta; ++j)
    sys.sigma[grid.index(nt - 1, j)] =
        2.0 * sys.sl.mass[j] * sys.phi[j] * g_face / ht2;
  return sys;
}

// Jacobian handle for the scaled Newton iteration: undo the row scaling, then
// back-substitute through the banded Cholesky factor.
struct ScaledBandSolve {
  BandedCholesky chol;
  const std::vector<double>* scale;
  std::vector<double> solve(std::vector<double> f) const {
    for (std::size_t i = 0; i < f.size(); ++i) f[i] *= (*scale)[i];
    return chol.solve(std::move(f));
  }
};

// Damped Newton solve of  A y + nl_mass (.) |y|^{q-1} y = b.  Residual rows
// are normalized by a per-row characteristic magnitude built from the warm
// start (which the callers arrange to be solution-sized) plus the load, so
// one relative tolerance covers problems whose rows span many orders of
// magnitude: a strong-limit run carries Dirac loads ~1e30 on the truncation
// row against O(1) equation terms mid-cylinder, and a sup-norm test on the
// raw residual would declare victory there while the interior is garbage.
// The scale is per-row with no global floor for the same reason.  The
// Jacobian A + diag(q nl_mass |y|^{q-1}) stays a symmetric M-matrix, so the
// banded Cholesky factorization never pivots.
inline std::pair<std::vector<double>, NewtonReport>
absorption_solve(const BandedOperator& A, const std::vector<double>& nl_mass,
                 double q, const std::vector<double>& b,
                 std::vector<double> init, double rel_tol = 1e-11,
                 int max_iter = 60) {
  const int n = A.size();
  const int bw = A.bandwidth();
  std::vector<double> scale(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double s = std::abs(b[i]);
    const int jlo = std::max(0, i - bw), jhi = std::min(n - 1, i + bw);
    for (int j = jlo; j <= jhi; ++j) s += std::abs(A.at(i, j)) * std::abs(init[j]);
    s += nl_mass[i] * std::pow(std::abs(init[i]), q);
    scale[i] = std::max(s, 1e-290);
  }

  auto residual = [&](const std::vector<double>& y) {
    std::vector<double> f = A.apply(y);
    for (int i = 0; i < n; ++i) {
      f[i] += nl_mass[i] * std::pow(std::abs(y[i]), q - 1.0) * y[i] - b[i];
      f[i] /= scale[i];
    }
    return f;
  };
  auto jacobian = [&](const std::vector<double>& y) {
    std::vector<double> shift(n);
    for (int i = 0; i < n; ++i)
      shift[i] = nl_mass[i] * q * std::pow(std::abs(y[i]), q - 1.0);
    return ScaledBandSolve{BandedCholesky(A, shift), &scale};
  };
  return damped_newton(residual, jacobian, std::move(init), rel_tol, max_iter, 2);
}

// Per-row values of the asymptotic fit across a t-window.  The window is
// mode-dependent.  Weak solutions approach k * (kernel lift) monotonically in
// t, so the deepest clean rows give the best amplitude estimate and the
// window sits at [0.6 T, 0.85 T].  Strong solutions carry a boundary layer at
// the inner truncation face t = T, where the large face datum relaxes onto
// the separable profile; the layer grows toward the face fast enough to
// contaminate the deep window, while the deviation is flat (discretization
// floor) over the middle of the cylinder.  The strong window therefore sits
// at [0.2 T, 0.4 T], clear of both the outer collar near t = 0 and the face
// layer.
inline AsymptoticFit window_fit(const ConeSolution& sol, const FitProfiles& profiles,
                                FitMode mode) {
  const TensorGrid2D& grid = sol.grid;
  const int ntheta = grid.theta.n_cells;
  if (static_cast<int>(profiles.phi.size()) != ntheta && mode == FitMode::Weak)
    throw ValidationError("fit: phi profile does not match the theta grid");
  if (static_cast<int>(profiles.omega.size()) != ntheta && mode == FitMode::Strong)
    throw ValidationError("fit: omega profile does not match the theta grid");
  AsymptoticFit fit;
  fit.mode = mode;
  if (mode == FitMode::Weak) {
    fit.window_lo = 0.6 * sol.T;
    fit.window_hi = 0.85 * sol.T;
  } else {
    fit.window_lo = 0.2 * sol.T;
    fit.window_hi = 0.4 * sol.T;
  }
  const double beta = 2.0 / (sol.q - 1.0);
  double sum = 0.0, lo = 0.0, hi = 0.0;
  int count = 0;
  for (int i = 0; i < grid.t.n_cells; ++i) {
    const double t = grid.t.center(i);
    if (t < fit.window_lo || t > fit.window_hi) continue;
    double row = 0.0;
    if (mode == FitMode::Weak) {
      for (int j = 0; j < ntheta; ++j)
        row = std::max(row, sol.v[grid.index(i, j)] / profiles.phi[j]);
    } else {
      const double stretch = std::exp((sol.exponents.alpha - beta) * t);
      for (int j = 0; j < ntheta; ++j)
        row = std::max(row, std::abs(stretch * sol.v[grid.index(i, j)] -
                                     profiles.omega[j]));
    }
    if (count == 0) {
      lo = hi = row;
    } else {
      lo = std::min(lo, row);
      hi = std::max(hi, row);
    }
    sum += row;
    count += 1;
  }
  if (count < 3)
    throw ValidationError("fit: fewer than three grid rows in the window");
  fit.fitted_amplitude = sum / count;
  fit.drift = hi - lo;
  // The drift must be small against the quantity that is supposed to have
  // stabilized: the amplitude itself in weak mode; for strong mode the row
  // value is a distance whose target is zero, so the profile amplitude sets
  // the scale instead.
  double noise_scale = std::abs(fit.fitted_amplitude);
  if (mode == FitMode::Strong)
    for (double w : profiles.omega) noise_scale = std::max(noise_scale, w);
  if (fit.drift > 0.25 * noise_scale)
    throw WindowTooNoisy("fit: drift " + std::to_string(fit.drift) +
                         " exceeds 25% of the window scale " +
                         std::to_string(noise_scale));
  return fit;
}

inline void gate_subcritical(const AxisymmetricOpening& opening, double q) {
  CriticalityClass cls = classify(opening, q);
  if (!cls.subcritical())
    throw SupercriticalRefused(
        "cone solve: the opening/exponent pair is not subcritical (margin " +
        std::to_string(cls.margin) + ")");
}

// Analytic kernel normalization from the best available eigenvalue.
inline double analytic_gamma(const AxisymmetricOpening& opening) {
  double lambda;
  if (auto exact = lambda_exact(opening))
    lambda = *exact;
  else
    lambda = lambda_numeric(opening, 256).lambda;
  ExponentTriple e = exponents(lambda, opening.dim);
  return std::pow(2.0, e.alpha) - std::pow(2.0, -e.alpha_tilde);
}

inline ConeSolution finish_solution(const CylinderSystem& sys,
                                    std::optional<double> k,
                                    const std::vector<double>& total_z,
                                    NewtonReport report) {
  ConeSolution sol;
  sol.opening = sys.opening;
  sol.q = sys.q;
  sol.grid = sys.grid;
  sol.k = k;
  sol.T = sys.grid.t.b;
  sol.newton = report;
  sol.exponents = sys.expo;
  sol.lambda_theta = sys.lambda_h;
  sol.c = sys.c;
  sol.mu = sys.mu;
  sol.gamma_hat = sys.gamma_hat;
  sol.gamma = analytic_gamma(sys.opening);
  sol.phi = sys.phi;
  sol.v.resize(sys.grid.size());
  const int nt = sys.grid.t.n_cells, ntheta = sys.grid.theta.n_cells;
  double vmin = 0.0, vmax = 0.0;
  for (int i = 0; i < nt; ++i) {
    const double down = std::exp(-sys.c * sys.grid.t.center(i) / 2.0);
    for (int j = 0; j < ntheta; ++j) {
      const double v = down * total_z[sys.grid.index(i, j)];
      sol.v[sys.grid.index(i, j)] = v;
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  }
  if (vmin < -1e-12 * std::max(1.0, vmax))
    throw NoConvergence("cone solve: converged iterate is not nonnegative");
  return sol;
}

inline std::vector<double> mid_slice(const CylinderSystem& sys,
                                     const std::vector<double>& total_z) {
  const int mid = sys.grid.t.n_cells / 2;
  const double t = sys.grid.t.center(mid);
  const double beta = 2.0 / (sys.q - 1.0);
  // r^beta u = e^{(alpha - beta) t} v = e^{(alpha - beta - c/2) t} z
  const double stretch = std::exp((sys.expo.alpha - beta - sys.c / 2.0) * t);
  std::vector<double> s(sys.grid.theta.n_cells);
  for (int j = 0; j < sys.grid.theta.n_cells; ++j)
    s[j] = stretch * total_z[sys.grid.index(mid, j)];
  return s;
}

} // namespace detail

inline KernelLift build_kernel_lift(const AxisymmetricOpening& opening,
                                    double q_context, const TensorGrid2D& grid) {
  detail::check_cone_grid(opening, grid);
  KernelLift lift;
  lift.opening = opening;
  lift.q_context = q_context;
  lift.grid = grid;

  double lambda;
  if (auto exact = lambda_exact(opening))
    lambda = *exact;
  else
    lambda = lambda_numeric(opening, std::max(256, grid.theta.n_cells)).lambda;
  lift.exponents = exponents(lambda, opening.dim);
  lift.gamma = std::pow(2.0, lift.exponents.alpha) -
               std::pow(2.0, -lift.exponents.alpha_tilde);

  detail::SLProblem sl = detail::assemble_sl(opening, grid.theta.n_cells);
  EigenResult eig = smallest_eigenpair(sl.A, sl.mass, 1e-13);
  lift.phi = std::move(eig.vector);
  const double pole = detail::pole_value(lift.phi);
  for (double& p : lift.phi) p /= pole;

  const int rows = lift.face_rows(), ntheta = grid.theta.n_cells;
  lift.Phi.resize(static_cast<std::size_t>(rows) * ntheta);
  lift.Phi_tilde.resize(lift.Phi.size());
  lift.Psi.resize(lift.Phi.size());
  for (int i = 0; i < rows; ++i) {
    const double t = grid.t.face(i);
    const double up = std::exp(lift.exponents.alpha * t);
    const double down = std::exp(-lift.exponents.alpha_tilde * t);
    for (int j = 0; j < ntheta; ++j) {
      const std::size_t p = lift.findex(i, j);
      lift.Phi[p] = up * lift.phi[j];
      lift.Phi_tilde[p] = down * lift.phi[j];
      lift.Psi[p] = (lift.Phi[p] - lift.Phi_tilde[p]) / lift.gamma;
    }
  }
  return lift;
}

inline ConeSolution solve_weak(const AxisymmetricOpening& opening, double q,
                               double k, const TensorGrid2D& grid) {
  if (!(q > 1.0)) throw ValidationError("solve_weak: requires q > 1");
  if (!(k >= 0.0)) throw ValidationError("solve_weak: requires k >= 0");
  detail::gate_subcritical(opening, q);
  detail::CylinderSystem sys = detail::make_cylinder_system(opening, q, grid);
  if (k == 0.0) {
    NewtonReport trivial;
    trivial.converged = true;
    return detail::finish_solution(sys, 0.0, std::vector<double>(grid.size(), 0.0),
                                   trivial);
  }
  std::vector<double> lift(grid.size()), load(grid.size());
  for (std::size_t p = 0; p < grid.size(); ++p) {
    lift[p] = k * sys.zhat[p];
    load[p] = k * sys.sigma[p];
  }
  auto [total, report] =
      detail::absorption_solve(sys.A, sys.nl_mass, q, load, std::move(lift));
  return detail::finish_solution(sys, k, total, report);
}

inline ConeSolution solve_strong(const AxisymmetricOpening& opening, double q,
                                 const TensorGrid2D& grid,
                                 DoublingSchedule schedule = {}) {
  if (!(q > 1.0)) throw ValidationError("solve_strong: requires q > 1");
  detail::gate_subcritical(opening, q);
  detail::CylinderSystem sys = detail::make_cylinder_system(opening, q, grid);
  const double beta = 2.0 / (q - 1.0);
  const double ceiling = std::pow(lambda_Nq(opening.dim, q), 1.0 / (q - 1.0));
  const int nt = grid.t.n_cells, ntheta = grid.theta.n_cells;

  // k placing the lift's truncation-face datum at the blow-up ceiling; the
  // interesting schedule segment starts here.
  const double k_base = schedule.k0 > 0.0
                            ? schedule.k0
                            : sys.gamma_hat * ceiling *
                                  std::exp((beta - sys.expo.alpha) * grid.t.b);

  // Warm start: the lift capped at the separable ceiling, so the reference
  // amplitudes scaling the Newton residual are solution-sized on every row
  // (the raw lift overshoots the interior by e^{(beta-alpha)(T-t)}).  The
  // load row is additionally clipped by its absorptive balance, which takes
  // over from the lift once k pushes the face datum past the blow-up layer.
  // Rebuilt wholesale after a calibrated jump: the pre-jump iterate (and the
  // residual scales frozen from it) sit orders of magnitude below the new
  // face layer, where line search alone cannot climb.
  std::vector<double> y(grid.size());
  auto reseed_warm_start = [&](double kk) {
    for (int i = 0; i < nt; ++i) {
      const double cap =
          ceiling *
          std::exp((beta - sys.expo.alpha + sys.c / 2.0) * grid.t.center(i));
      for (int j = 0; j < ntheta; ++j) {
        const std::size_t p = grid.index(i, j);
        // The load row is not capped: its boundary layer legitimately rises
        // above the separable envelope, limited by absorption instead.
        const double bound =
            i == nt - 1
                ? std::pow(kk * sys.sigma[p] / sys.nl_mass[p], 1.0 / q)
                : cap;
        y[p] = std::min(kk * sys.zhat[p], bound);
      }
    }
  };
  reseed_warm_start(k_base);

  std::vector<double> load(grid.size());
  std::vector<double> slice_prev;
  NewtonReport report;
  double k = k_base;
  bool jumped = schedule.k0 > 0.0; // explicit k0 requests the plain schedule
  double remaining_jump = 1.0;     // calibrated-jump factor not yet applied
  int doublings = 0;
  for (;;) {
    for (std::size_t p = 0; p < grid.size(); ++p) load[p] = k * sys.sigma[p];
    auto [ynew, rep] =
        detail::absorption_solve(sys.A, sys.nl_mass, q, load, std::move(y));
    y = std::move(ynew);
    report = rep;
    if (remaining_jump > 1.0) {
      // Mid-jump: keep feeding the calibrated factor in chunks of 2^6, warm
      // starting from the solution just obtained.  Larger hops strand the
      // iterate (and the residual scales frozen from it) orders of magnitude
      // below the shifted face layer, where line search cannot climb.
      const double f = std::min(64.0, remaining_jump);
      remaining_jump /= f;
      k *= f;
      continue;
    }
    std::vector<double> slice = detail::mid_slice(sys, y);
    if (!slice_prev.empty()) {
      double change = 0.0, amp = 0.0;
      for (std::size_t i = 0; i < slice.size(); ++i) {
        change = std::max(change, std::abs(slice[i] - slice_prev[i]));
        amp = std::max(amp, std::abs(slice[i]));
      }
      const double tol = schedule.slice_tol * std::max(1.0, amp);
      if (change < tol)
        return detail::finish_solution(sys, std::nullopt, y, report);
      if (!jumped) {
        // Consecutive slices contract like k^{-1/beta}: doubling k shifts the
        // face blow-up layer by (q-1) ln2 / 2, so plain doubling needs about
        // beta log2(change/tol) more steps -- far beyond the schedule for
        // beta >= 4.  One calibrated jump lands the next change near 0.3 tol
        // and genuine doublings confirm stabilization from there.
        jumped = true;
        const double steps = beta * std::log2(change / (0.3 * tol));
        if (steps > 1.0) {
          remaining_jump = std::pow(2.0, std::min(400.0, std::ceil(steps)));
          const double f = std::min(64.0, remaining_jump);
          remaining_jump /= f;
          k *= f;
          slice_prev.clear(); // post-jump changes are not doubling changes
          continue;
        }
      }
    }
    slice_prev = std::move(slice);
    if (++doublings > schedule.max_doublings)
      throw ScheduleExhausted(
          "solve_strong: mid-cylinder slice did not stabilize within " +
          std::to_string(schedule.max_doublings) + " doublings");
    k *= 2.0;
  }
}

inline AsymptoticFit fit_vertex_asymptotics(const ConeSolution& solution,
                                            const FitProfiles& profiles) {
  if (!solution.newton.converged && !solution.v.empty()) {
    // a defensive guard; solves only return converged objects
    throw ValidationError("fit: solution did not converge");
  }
  const FitMode mode = solution.k.has_value() ? FitMode::Weak : FitMode::Strong;
  return detail::window_fit(solution, profiles, mode);
}

inline Classification classify_solution(const ConeSolution& solution,
                                        const ClassifyTolerances& tol = {}) {
  double vmax = 0.0;
  for (double v : solution.v) vmax = std::max(vmax, std::abs(v));
  if (vmax <= tol.bounded_vanish * std::max(1.0, solution.k.value_or(0.0))) {
    Classification out;
    out.kind = SolutionClass::Bounded;
    out.fit.window_lo = 0.6 * solution.T;
    out.fit.window_hi = 0.85 * solution.T;
    return out;
  }
  // Strong probe first: on a strong solution the weak fit drifts by design
  // (max_theta v / phi grows like e^{(beta - alpha) t}), so its failure is
  // not evidence of anything.  The profile solver has a 64-cell floor, so on
  // coarser cross-section grids it runs at that floor and is restricted onto
  // the solution's centers.
  std::optional<SingularProfile> omega;
  try {
    const int n_prof = std::max(64, solution.grid.theta.n_cells);
    omega = solve_profile(solution.opening, solution.q, n_prof);
  } catch (const Error&) {
    omega.reset(); // supercritical or unconverged: no strong profile exists
  }
  if (omega) {
    std::vector<double> omega_here(solution.grid.theta.n_cells);
    for (std::size_t j = 0; j < omega_here.size(); ++j)
      omega_here[j] = profile_value(*omega, solution.grid.theta.center(int(j)));
    double omega_max = 0.0;
    for (double w : omega_here) omega_max = std::max(omega_max, w);
    try {
      AsymptoticFit fit =
          detail::window_fit(solution, {solution.phi, omega_here}, FitMode::Strong);
      if (fit.fitted_amplitude <= tol.strong_rel * omega_max)
        return {SolutionClass::StrongSingularity, std::nullopt, fit};
    } catch (const WindowTooNoisy&) {
    }
  }
  try {
    AsymptoticFit fit =
        detail::window_fit(solution, {solution.phi, {}}, FitMode::Weak);
    if (fit.fitted_amplitude > 0.0)
      return {SolutionClass::WeakSingularity, fit.fitted_amplitude * solution.gamma,
              fit};
  } catch (const WindowTooNoisy&) {
  }
  throw Unclassifiable(
      "classify_solution: neither the bounded, weak, nor strong window stabilized");
}

inline KellerOssermanReport verify_keller_osserman(const ConeSolution& solution) {
  const double q = solution.q;
  const double beta = 2.0 / (q - 1.0);
  const double L = solution.opening.reduced_angle();
  const double alpha = solution.exponents.alpha;
  KellerOssermanReport report;
  report.reference_constant =
      std::pow(2.0 * (q + 1.0) / ((q - 1.0) * (q - 1.0)), 1.0 / (q - 1.0));
  const TensorGrid2D& grid = solution.grid;
  const double r_inner = std::exp(-grid.t.b);
  for (int i = 0; i < grid.t.n_cells; ++i) {
    const double t = grid.t.center(i);
    const double r = std::exp(-t);
    const double u_scale = std::exp(alpha * t);
    for (int j = 0; j < grid.theta.n_cells; ++j) {
      const double gap = L - grid.theta.center(j);
      const double lateral = gap < pi / 2.0 ? r * std::sin(gap) : r;
      // boundary of the truncated cone: lateral wall, unit sphere, and the
      // inner truncation sphere (where strong-limit runs carry their layer)
      const double dist = std::min({lateral, 1.0 - r, r - r_inner});
      const double product =
          u_scale * solution.v[grid.index(i, j)] * std::pow(dist, beta);
      if (product > report.max_product) {
        report.max_product = product;
        report.t_index = i;
        report.theta_index = j;
      }
    }
  }
  return report;
}

// Removability experiment: for each epsilon, put the whole mass k on the
// lateral-boundary band r in (epsilon, 2 epsilon), normalized by the discrete
// harmonic measure of the band seen from x0, solve the nonlinear problem, and
// probe u(x0).  Subcritical exponents stabilize at the Dirac solution's value;
// supercritical ones collapse toward zero as the band slides into the vertex.
inline std::vector<double>
dirac_approximation_limit(const AxisymmetricOpening& opening, double q, double k,
                          const std::vector<double>& epsilon_schedule,
                          const TensorGrid2D& grid) {
  if (!(q > 1.0)) throw ValidationError("dirac_approximation_limit: requires q > 1");
  if (!(k >= 0.0)) throw ValidationError("dirac_approximation_limit: requires k >= 0");
  detail::check_cone_grid(opening, grid);
  for (double eps : epsilon_schedule) {
    if (!(eps > 0.0) || !(2.0 * eps <= 1.0))
      throw ValidationError("dirac_approximation_limit: bands need 0 < 2 eps <= 1");
    if (std::log(1.0 / eps) > grid.t.b)
      throw ValidationError(
          "dirac_approximation_limit: band r in (eps, 2 eps) leaves the grid; "
          "deepen T");
  }

  HarmonicCylinder cyl(opening, grid);
  const ConePoint x0 = reference_point();
  const int nt = grid.t.n_cells, ntheta = grid.theta.n_cells;
  std::vector<double> nl(grid.size());
  for (int i = 0; i < nt; ++i) {
    const double m = std::exp(-opening.dim * grid.t.center(i));
    for (int j = 0; j < ntheta; ++j)
      nl[grid.index(i, j)] = cyl.theta_weights()[j] * m;
  }

  std::vector<double> probes;
  probes.reserve(epsilon_schedule.size());
  for (double eps : epsilon_schedule) {
    const double t_lo = std::log(1.0 / (2.0 * eps)), t_hi = std::log(1.0 / eps);
    CylinderData data = cyl.zero_data();
    for (int i = 0; i < nt; ++i) {
      const double t = grid.t.center(i);
      if (t > t_lo && t < t_hi) data.lateral[i] = 1.0;
    }
    const double band_measure = axis_value(grid, cyl.solve(data), x0.t);
    if (!(band_measure > 0.0))
      throw SingularOperator("dirac_approximation_limit: band has no harmonic mass");
    if (k == 0.0) {
      probes.push_back(0.0);
      continue;
    }
    for (double& g : data.lateral) g *= k / band_measure;
    std::vector<double> harm = cyl.solve(data);
    auto [u, rep] = detail::absorption_solve(cyl.op(), nl, q, cyl.rhs(data),
                                             std::move(harm));
    (void)rep;
    probes.push_back(axis_value(grid, u, x0.t));
  }
  return probes;
}

} // namespace conetrace
