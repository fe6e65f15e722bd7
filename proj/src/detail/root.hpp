#pragma once

#include <cmath>
#include <limits>
#include <utility>

namespace mfl::detail {

struct RootResult {
  double x = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
  double lo = 0.0;
  double hi = 0.0;
};

// Newton's method kept inside a sign-change bracket, falling back to bisection
// whenever the Newton step leaves the bracket or stops halving. `f` returns
// {value, derivative}. Stops when |f| <= ftol or the bracket is narrower than xtol.
template <class F>
RootResult safeguarded_newton(F&& f, double a, double b, double x0, double ftol, double xtol,
                              int max_iter) {
  RootResult r;
  r.lo = std::min(a, b);
  r.hi = std::max(a, b);
  const double fa = f(a).first;
  const double fb = f(b).first;
  if (fa == 0.0) return {a, 0, true, a, a};
  if (fb == 0.0) return {b, 0, true, b, b};
  if (!(std::isfinite(fa) && std::isfinite(fb)) || (fa > 0.0) == (fb > 0.0)) return r;
  double neg = fa < 0.0 ? a : b;
  double pos = fa < 0.0 ? b : a;
  double x = (x0 > r.lo && x0 < r.hi) ? x0 : 0.5 * (a + b);
  double dx_old = r.hi - r.lo;
  double dx = dx_old;
  for (int it = 1; it <= max_iter; ++it) {
    const auto [fx, dfx] = f(x);
    r.x = x;
    r.iterations = it;
    if (std::abs(fx) <= ftol) {
      r.converged = true;
      return r;
    }
    if (fx < 0.0) neg = x; else pos = x;
    r.lo = std::min(neg, pos);
    r.hi = std::max(neg, pos);
    if (r.hi - r.lo <= xtol) {
      r.converged = true;
      return r;
    }
    double next = x - fx / dfx;
    const bool newton_ok = std::isfinite(next) && next > r.lo && next < r.hi &&
                           std::abs(2.0 * fx) <= std::abs(dx_old * dfx);
    dx_old = dx;
    if (!newton_ok) next = 0.5 * (r.lo + r.hi);
    dx = std::abs(next - x);
    if (next == x) {
      r.converged = true;
      return r;
    }
    x = next;
  }
  return r;
}

}  // namespace mfl::detail
