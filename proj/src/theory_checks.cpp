#include "theory_checks.hpp"

#include <cmath>

#include "errors.hpp"
#include "rng.hpp"

namespace tmld {

namespace {

la::Mat inv_jacobian_at(const Map& map, const double* y) {
  int d = map.dim();
  la::Mat J(d, d);
  map.jacobian(y, J.data());
  return la::inverse(J);
}

// c_k = sum_i d^2 T_k / dx_i^2 from the map's inverse Hessian tensor.
std::vector<double> ito_correction(const Map& map, const double* x) {
  int d = map.dim();
  std::vector<double> H(static_cast<size_t>(d) * d * d);
  map.inverse_hessian(x, H.data());
  std::vector<double> c(d, 0.0);
  for (int k = 0; k < d; ++k)
    for (int i = 0; i < d; ++i) c[k] += H[(static_cast<size_t>(k) * d + i) * d + i];
  return c;
}

// Finite-difference Jacobian of T at x (step 1e-6 (1+|x|_inf)).
la::Mat fd_inverse_jacobian(const Map& map, const double* x) {
  int d = map.dim();
  double step = 1e-6 * (1.0 + la::norm_inf(x, d));
  la::Mat J(d, d);
  std::vector<double> xp(x, x + d), yp(d), ym(d);
  for (int j = 0; j < d; ++j) {
    xp[j] = x[j] + step;
    map.inverse(xp.data(), yp.data());
    xp[j] = x[j] - step;
    map.inverse(xp.data(), ym.data());
    xp[j] = x[j];
    for (int k = 0; k < d; ++k) J(k, j) = (yp[k] - ym[k]) / (2 * step);
  }
  return J;
}

std::vector<double> mapped_drift(const Target& target, const Map& map, const std::vector<double>& y,
                                 const la::Mat* skew) {
  int d = map.dim();
  std::vector<double> x(d);
  map.forward(y.data(), x.data());
  std::vector<double> gx(d);
  pushforward_grad_log_density(target, map, x.data(), gx.data(), y.data());
  if (skew) {
    std::vector<double> Dg(d);
    la::mat_vec(skew->data(), d, d, gx.data(), Dg.data());
    for (int i = 0; i < d; ++i) gx[i] += Dg[i];
  }
  la::Mat JT = inv_jacobian_at(map, y.data());
  std::vector<double> drift(d);
  la::mat_vec(JT.data(), d, d, gx.data(), drift.data());
  std::vector<double> c = ito_correction(map, x.data());
  for (int i = 0; i < d; ++i) drift[i] += c[i];
  return drift;
}

std::vector<double> perturbation_drift(const Target& target, const Map& map, const std::vector<double>& y,
                                       const la::Mat* skew) {
  int d = map.dim();
  std::vector<double> grad(d);
  target.grad_log_density(y.data(), grad.data());
  la::Mat JT = inv_jacobian_at(map, y.data());
  la::Mat B = la::mat_mul(JT, la::transpose(JT));
  la::Mat P = B;
  if (skew) {
    la::Mat C = la::mat_mul(la::mat_mul(JT, *skew), la::transpose(JT));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) P(i, j) += C(i, j);
  }
  std::vector<double> drift(d);
  la::mat_vec(P.data(), d, d, grad.data(), drift.data());
  // div B comes from the map (analytic where the kind provides it); the skew
  // part div C = skew-contraction + J_T D w uses the inverse-Hessian tensor.
  std::vector<double> div(d, 0.0);
  map.metric_divergence(y.data(), div.data());
  if (skew) {
    std::vector<double> x(d);
    map.forward(y.data(), x.data());
    std::vector<double> J(static_cast<size_t>(d) * d), H(static_cast<size_t>(d) * d * d);
    map.jacobian(y.data(), J.data());
    map.inverse_hessian(x.data(), H.data());
    std::vector<double> w(d, 0.0);
    for (int m = 0; m < d; ++m)
      for (int j = 0; j < d; ++j)
        for (int l = 0; l < d; ++l)
          w[m] += H[(static_cast<size_t>(j) * d + m) * d + l] * J[static_cast<size_t>(l) * d + j];
    std::vector<double> Dw(d);
    la::mat_vec(skew->data(), d, d, w.data(), Dw.data());
    for (int k = 0; k < d; ++k) {
      double skew_sum = 0;  // vanishes by symmetry of second derivatives
      for (int i = 0; i < d; ++i)
        for (int m = 0; m < d; ++m)
          skew_sum += (*skew)(i, m) * H[(static_cast<size_t>(k) * d + i) * d + m];
      double jt_dw = 0;
      for (int i = 0; i < d; ++i) jt_dw += JT(k, i) * Dw[i];
      div[k] += skew_sum + jt_dw;
    }
  }
  for (int i = 0; i < d; ++i) drift[i] += div[i];
  return drift;
}

}  // namespace

EquivalenceReport check_tmrmld_equivalence(const Target& target, const Map& map,
                                           const std::vector<double>& y, double tol) {
  int d = map.dim();
  EquivalenceReport rep;
  rep.point = y;
  rep.tolerance = tol;
  std::vector<double> a = mapped_drift(target, map, y, nullptr);
  std::vector<double> b = perturbation_drift(target, map, y, nullptr);
  double dr = 0;
  for (int i = 0; i < d; ++i) dr += (a[i] - b[i]) * (a[i] - b[i]);
  rep.drift_residual = std::sqrt(dr);
  // diffusion: sqrt(B) = J_S^{-1}, checked against the FD Jacobian of T
  std::vector<double> x(d);
  map.forward(y.data(), x.data());
  la::Mat JT = inv_jacobian_at(map, y.data());
  la::Mat JTfd = fd_inverse_jacobian(map, x.data());
  double df = 0, jn = 0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      df += (JT(i, j) - JTfd(i, j)) * (JT(i, j) - JTfd(i, j));
      jn += JT(i, j) * JT(i, j);
    }
  rep.diffusion_residual = std::sqrt(df) / (1.0 + std::sqrt(jn));
  rep.pass = rep.drift_residual <= tol && rep.diffusion_residual <= tol;
  return rep;
}

EquivalenceReport check_giirr_equivalence(const Target& target, const Map& map, const la::Mat& D,
                                          const std::vector<double>& y, double tol) {
  int d = map.dim();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (std::fabs(D(i, j) + D(j, i)) > 1e-12)
        throw InvalidParameterError("check_giirr_equivalence: D is not skew-symmetric");
  EquivalenceReport rep;
  rep.point = y;
  rep.tolerance = tol;
  std::vector<double> a = mapped_drift(target, map, y, &D);
  std::vector<double> b = perturbation_drift(target, map, y, &D);
  double dr = 0;
  for (int i = 0; i < d; ++i) dr += (a[i] - b[i]) * (a[i] - b[i]);
  rep.drift_residual = std::sqrt(dr);
  std::vector<double> x(d);
  map.forward(y.data(), x.data());
  la::Mat JT = inv_jacobian_at(map, y.data());
  la::Mat JTfd = fd_inverse_jacobian(map, x.data());
  double df = 0, jn = 0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      df += (JT(i, j) - JTfd(i, j)) * (JT(i, j) - JTfd(i, j));
      jn += JT(i, j) * JT(i, j);
    }
  rep.diffusion_residual = std::sqrt(df) / (1.0 + std::sqrt(jn));
  // skew cancellation: sum_{i,l} D_{li} d^2 T_k / dx_i dx_l = 0 by symmetry
  std::vector<double> H(static_cast<size_t>(d) * d * d);
  map.inverse_hessian(x.data(), H.data());
  double worst = 0;
  for (int k = 0; k < d; ++k) {
    double s = 0;
    for (int i = 0; i < d; ++i)
      for (int l = 0; l < d; ++l) s += D(l, i) * H[(static_cast<size_t>(k) * d + i) * d + l];
    worst = std::max(worst, std::fabs(s));
  }
  rep.skew_cancellation_residual = worst;
  rep.pass = rep.drift_residual <= tol && rep.diffusion_residual <= tol;
  return rep;
}

OneStepDiscrepancy onestep_discrepancy(const Target& target, const Map& map, const std::vector<double>& y,
                                       double h, size_t n_mc, uint64_t seed) {
  int d = map.dim();
  std::vector<double> x(d);
  map.forward(y.data(), x.data());

  // closed form from the inverse Hessian at x = S(y)
  std::vector<double> H(static_cast<size_t>(d) * d * d);
  map.inverse_hessian(x.data(), H.data());
  double lap_sq = 0, frob_sq = 0;
  for (int k = 0; k < d; ++k) {
    for (int j = 0; j < d; ++j) {
      double djj = H[(static_cast<size_t>(k) * d + j) * d + j];
      lap_sq += djj * djj;
      for (int l = 0; l < d; ++l) {
        double v = H[(static_cast<size_t>(k) * d + j) * d + l];
        frob_sq += v * v;
      }
    }
  }
  double closed = h * h * (lap_sq + frob_sq);

  // Monte Carlo with common noise
  std::vector<double> gx(d);
  pushforward_grad_log_density(target, map, x.data(), gx.data(), y.data());
  std::vector<double> tm_base(d);
  for (int i = 0; i < d; ++i) tm_base[i] = x[i] + h * gx[i];

  std::vector<double> grad(d), tmp(d), bdrift(d), div(d);
  la::Mat J(d, d);
  map.jacobian(y.data(), J.data());
  target.grad_log_density(y.data(), grad.data());
  std::vector<double> em_base(d);
  {
    std::vector<double> u(d);
    if (map.lower_triangular()) {
      la::solve_lower_transposed(J.data(), d, grad.data(), u.data());
      la::solve_lower(J.data(), d, u.data(), bdrift.data());
    } else {
      la::Mat Jt = la::transpose(J);
      la::solve(Jt.data(), d, grad.data(), u.data());
      la::solve(J.data(), d, u.data(), bdrift.data());
    }
    map.metric_divergence(y.data(), div.data());
    for (int i = 0; i < d; ++i) em_base[i] = y[i] + h * (bdrift[i] + div[i]);
  }

  rng::Stream stream(seed, 0x05e9);
  double sq = std::sqrt(2.0 * h);
  std::vector<double> xi(d), xprop(d), ytm(d), noise(d);
  double acc = 0;
  for (size_t i = 0; i < n_mc; ++i) {
    stream.normals(i, xi.data(), d);
    for (int t = 0; t < d; ++t) xprop[t] = tm_base[t] + sq * xi[t];
    map.inverse(xprop.data(), ytm.data());
    if (map.lower_triangular())
      la::solve_lower(J.data(), d, xi.data(), noise.data());
    else
      la::solve(J.data(), d, xi.data(), noise.data());
    double dist = 0;
    for (int t = 0; t < d; ++t) {
      double diff = ytm[t] - (em_base[t] + sq * noise[t]);
      dist += diff * diff;
    }
    acc += dist;
  }
  OneStepDiscrepancy out;
  out.mc_estimate = acc / static_cast<double>(n_mc);
  out.closed_form = closed;
  double scale = std::max(std::fabs(out.closed_form), 1e-300);
  out.rel_err = std::fabs(out.mc_estimate - out.closed_form) / scale;
  return out;
}

OptimalRate optimal_rate(double m, double L) {
  if (!(m > 0) || !(L >= m)) throw InvalidParameterError("optimal_rate: need 0 < m <= L");
  OptimalRate r;
  r.r = 1.0 - m * L / ((m + L) * (m + L));
  r.dr_dL = m * (L - m) / std::pow(m + L, 3);
  return r;
}

double jacobian_bound_estimate(const Map& map, const double* points, size_t n) {
  if (n == 0) throw InvalidParameterError("jacobian_bound_estimate: no points");
  int d = map.dim();
  double worst = 0;
  std::vector<double> y(d);
  for (size_t i = 0; i < n; ++i) {
    map.inverse(points + i * d, y.data());
    la::Mat JT = inv_jacobian_at(map, y.data());
    double fro = 0;
    for (double v : JT.a) fro += v * v;
    worst = std::max(worst, std::sqrt(fro));
  }
  return worst;
}

double appendix_a_identity_residual(const Map& map, const std::vector<double>& y) {
  int d = map.dim();
  std::vector<double> gld(d);
  map.grad_log_det(y.data(), gld.data());
  // divergence of A(y) = J_S(y)^{-T} by central differences
  double step = 1e-5 * (1.0 + la::norm_inf(y.data(), d));
  std::vector<double> div(d, 0.0), yp(y);
  for (int j = 0; j < d; ++j) {
    yp[j] = y[j] + step;
    la::Mat Ap = la::transpose(inv_jacobian_at(map, yp.data()));
    yp[j] = y[j] - step;
    la::Mat Am = la::transpose(inv_jacobian_at(map, yp.data()));
    yp[j] = y[j];
    for (int k = 0; k < d; ++k) div[k] += (Ap(k, j) - Am(k, j)) / (2 * step);
  }
  la::Mat J(d, d);
  map.jacobian(y.data(), J.data());
  std::vector<double> corr(d);
  la::mat_tvec(J.data(), d, d, div.data(), corr.data());
  double worst = 0;
  for (int i = 0; i < d; ++i) worst = std::max(worst, std::fabs(gld[i] + corr[i]));
  return worst;
}

}  // namespace tmld
