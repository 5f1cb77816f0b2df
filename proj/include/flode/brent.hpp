#pragma once

#include <cmath>
#include <stdexcept>

namespace flode {

struct BrentResult {
  double x = 0.0;
  double fx = 0.0;
  int n_evals = 0;
  bool converged = false;
};

/// Bounded scalar minimization by Brent's method (golden-section search with
/// successive parabolic interpolation). Finds a local minimizer of f on
/// [lo, hi] to absolute x-tolerance xtol.
template <class F>
BrentResult brent_minimize(F&& f, double lo, double hi, double xtol = 1e-8,
                           int max_iter = 200) {
  if (!(lo < hi)) throw std::invalid_argument("brent_minimize: lo must be < hi");
  constexpr double golden = 0.3819660112501051;  // (3 - sqrt(5)) / 2
  constexpr double eps = 1e-12;

  BrentResult res;
  double a = lo, b = hi;
  double x = a + golden * (b - a);
  double w = x, v = x;
  double fx = f(x);
  res.n_evals = 1;
  double fw = fx, fv = fx;
  double d = 0.0, e = 0.0;

  for (int iter = 0; iter < max_iter; ++iter) {
    const double m = 0.5 * (a + b);
    const double tol1 = eps * std::abs(x) + xtol;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - m) <= tol2 - 0.5 * (b - a)) {
      res.converged = true;
      break;
    }
    double u;
    bool parabolic = false;
    if (std::abs(e) > tol1) {
      // Trial parabolic fit through (v, fv), (w, fw), (x, fx).
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double e_old = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * e_old) && p > q * (a - x) &&
          p < q * (b - x)) {
        parabolic = true;
        d = p / q;
        u = x + d;
        if (u - a < tol2 || b - u < tol2) d = (x < m) ? tol1 : -tol1;
      }
    }
    if (!parabolic) {
      e = (x < m) ? b - x : a - x;
      d = golden * e;
    }
    u = (std::abs(d) >= tol1) ? x + d : x + (d > 0 ? tol1 : -tol1);
    const double fu = f(u);
    ++res.n_evals;
    if (fu <= fx) {
      if (u < x) b = x; else a = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  res.x = x;
  res.fx = fx;
  return res;
}

}  // namespace flode
