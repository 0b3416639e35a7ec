#include "optimize.hpp"

#include <cmath>

#include "errors.hpp"
#include "linalg.hpp"

namespace tmld {

namespace {

struct LinePoint {
  double a, f, g;  // step, value, directional derivative
};

}  // namespace

OptimResult minimize_bfgs(const ObjectiveFn& fg, std::vector<double> x0, const OptimOptions& opts) {
  const int n = static_cast<int>(x0.size());
  const double c1 = 1e-4, c2 = 0.9;

  std::vector<double> x = std::move(x0), g(n), xn(n), gn(n), p(n), s(n), yv(n), Hy(n);
  la::Mat H = la::Mat::identity(n);
  double f = fg(x.data(), g.data());
  if (!std::isfinite(f)) throw NumericsError("bfgs: objective not finite at the initial point");

  OptimResult res;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    double gnorm = la::norm2(g.data(), n);
    if (gnorm <= opts.grad_tol) {
      res.converged = true;
      break;
    }
    // p = -H g
    la::mat_vec(H.data(), n, n, g.data(), p.data());
    for (int i = 0; i < n; ++i) p[i] = -p[i];
    double dphi0 = la::dot(g.data(), p.data(), n);
    if (dphi0 >= 0) {  // reset to steepest descent if H lost positivity
      H = la::Mat::identity(n);
      for (int i = 0; i < n; ++i) p[i] = -g[i];
      dphi0 = -la::dot(g.data(), g.data(), n);
    }

    auto eval = [&](double a) -> LinePoint {
      for (int i = 0; i < n; ++i) xn[i] = x[i] + a * p[i];
      double fa = fg(xn.data(), gn.data());
      return {a, fa, la::dot(gn.data(), p.data(), n)};
    };

    // strong-Wolfe bracket + zoom
    LinePoint lo{0.0, f, dphi0}, best{0.0, f, dphi0};
    bool found = false;
    double aprev = 0.0, fprev = f, gprev = dphi0, a = 1.0;
    for (int ls = 0; ls < 25 && !found; ++ls) {
      LinePoint pt = eval(a);
      bool armijo_fail = !(pt.f <= f + c1 * a * dphi0) || (ls > 0 && pt.f >= fprev);
      if (!std::isfinite(pt.f)) armijo_fail = true;
      if (armijo_fail) {
        // zoom between aprev and a
        double zlo = aprev, zhi = a;
        double flo2 = fprev;
        for (int z = 0; z < 40; ++z) {
          double am = 0.5 * (zlo + zhi);
          LinePoint zm = eval(am);
          if (!std::isfinite(zm.f) || zm.f > f + c1 * am * dphi0 || zm.f >= flo2) {
            zhi = am;
          } else {
            if (std::fabs(zm.g) <= -c2 * dphi0) {
              best = zm;
              found = true;
              break;
            }
            if (zm.g * (zhi - zlo) >= 0) zhi = zlo;
            zlo = am;
            flo2 = zm.f;
            best = zm;
            found = true;  // acceptable Armijo point; keep but try to improve
          }
        }
        if (!found && best.a == 0.0) best = lo;
        break;
      }
      if (std::fabs(pt.g) <= -c2 * dphi0) {
        best = pt;
        found = true;
        break;
      }
      if (pt.g >= 0) {
        // minimum bracketed between aprev and a
        double zlo = a, zhi = aprev;  // order by function value
        double flo2 = pt.f;
        best = pt;
        found = true;
        for (int z = 0; z < 40; ++z) {
          double am = 0.5 * (zlo + zhi);
          LinePoint zm = eval(am);
          if (!std::isfinite(zm.f) || zm.f > f + c1 * am * dphi0 || zm.f >= flo2) {
            zhi = am;
          } else {
            if (std::fabs(zm.g) <= -c2 * dphi0) {
              best = zm;
              break;
            }
            if (zm.g * (zhi - zlo) >= 0) zhi = zlo;
            zlo = am;
            flo2 = zm.f;
            best = zm;
          }
        }
        break;
      }
      best = pt;
      found = pt.f < f;
      aprev = a;
      fprev = pt.f;
      gprev = pt.g;
      a *= 2.0;
    }
    (void)gprev;
    if (best.a == 0.0) break;  // no progress possible

    // recompute state at the accepted step (xn/gn may hold a different trial)
    for (int i = 0; i < n; ++i) xn[i] = x[i] + best.a * p[i];
    double fn = fg(xn.data(), gn.data());
    if (!std::isfinite(fn)) throw NumericsError("bfgs: objective became non-finite");

    for (int i = 0; i < n; ++i) {
      s[i] = xn[i] - x[i];
      yv[i] = gn[i] - g[i];
    }
    double sy = la::dot(s.data(), yv.data(), n);
    if (sy > 1e-14 * la::norm2(s.data(), n) * la::norm2(yv.data(), n) && sy > 0) {
      // BFGS inverse update
      la::mat_vec(H.data(), n, n, yv.data(), Hy.data());
      double yHy = la::dot(yv.data(), Hy.data(), n);
      double rho = 1.0 / sy;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          H(i, j) += (1.0 + rho * yHy) * rho * s[i] * s[j] - rho * (Hy[i] * s[j] + s[i] * Hy[j]);
    }
    x.swap(xn);
    g.swap(gn);
    f = fn;
  }
  res.x = std::move(x);
  res.f = f;
  res.grad_norm = la::norm2(g.data(), n);
  res.iters = it;
  if (res.grad_norm <= opts.grad_tol) res.converged = true;
  return res;
}

}  // namespace tmld
