#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "conetrace/errors.hpp"

namespace conetrace {

struct NewtonReport {
  int iterations = 0;
  double final_residual_sup = 0.0;
  int damping_events = 0;
  bool converged = false;
};

inline double sup_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Damped Newton iteration.  `residual` maps the current iterate to F(x);
// `jacobian` returns an operator with a .solve(rhs) method for J(x) d = F(x).
// Steps are halved until the sup-norm of the residual strictly decreases;
// more than 30 halvings in one iteration is reported as LineSearchStall.
// `polish_steps` full Newton steps are attempted after the tolerance is met,
// each kept only if it reduces the residual further; this drives independent
// starting guesses to the same rounding-floor root instead of stopping at the
// first iterate under `tol`.
template <typename Residual, typename Jacobian>
std::pair<std::vector<double>, NewtonReport>
damped_newton(Residual&& residual, Jacobian&& jacobian, std::vector<double> x,
              double tol, int max_iter = 50, int polish_steps = 0) {
  NewtonReport report;
  std::vector<double> f = residual(x);
  double fnorm = sup_norm(f);
  auto polish = [&]() {
    for (int p = 0; p < polish_steps; ++p) {
      auto op = jacobian(x);
      std::vector<double> step = op.solve(f);
      std::vector<double> trial(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] - step[i];
      std::vector<double> ftrial = residual(trial);
      const double fnew = sup_norm(ftrial);
      if (fnew >= fnorm) break;
      x.swap(trial);
      f.swap(ftrial);
      fnorm = fnew;
    }
  };
  for (int it = 0; it < max_iter; ++it) {
    if (fnorm <= tol) {
      polish();
      report.converged = true;
      report.final_residual_sup = fnorm;
      return {x, report};
    }
    auto op = jacobian(x);
    std::vector<double> step = op.solve(f);
    double s = 1.0;
    std::vector<double> trial(x.size());
    std::vector<double> ftrial;
    int halvings = 0;
    for (;;) {
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] - s * step[i];
      ftrial = residual(trial);
      const double fnew = sup_norm(ftrial);
      if (fnew < fnorm || fnew <= tol) {
        x.swap(trial);
        f.swap(ftrial);
        fnorm = fnew;
        break;
      }
      if (++halvings > 30)
        throw LineSearchStall("damped_newton: 30 step halvings without residual decrease");
      report.damping_events += 1;
      s *= 0.5;
    }
    report.iterations = it + 1;
  }
  if (fnorm <= tol) {
    polish();
    report.converged = true;
    report.final_residual_sup = fnorm;
    return {x, report};
  }
  throw NoConvergence("damped_newton: iteration cap reached with residual " +
                      std::to_string(fnorm));
}

} // namespace conetrace
