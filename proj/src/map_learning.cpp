#include "map_learning.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "hermite.hpp"
#include "optimize.hpp"
#include "quadrature.hpp"
#include "util.hpp"

namespace tmld {

void MapTrainingSpec::validate() const {
  if (quadrature_points < 8) throw InvalidParameterError("training spec: quadrature_points must be >= 8");
  if (total_order < 0 || total_order > 6)
    throw InvalidParameterError("training spec: total_order must be in [0, 6]");
  if (max_iters < 1) throw InvalidParameterError("training spec: max_iters must be >= 1");
  if (!(grad_tol > 0)) throw InvalidParameterError("training spec: grad_tol must be positive");
}

double negative_log_likelihood(const Map& map, const double* samples, size_t n, int d) {
  if (map.dim() != d) throw InvalidParameterError("negative_log_likelihood: dimension mismatch");
  if (n == 0) throw InvalidParameterError("negative_log_likelihood: no samples");
  double acc = 0;
  std::vector<double> x(d);
  for (size_t i = 0; i < n; ++i) {
    map.forward(samples + i * d, x.data());
    double term = 0.5 * la::dot(x.data(), x.data(), d) - map.log_det_jacobian(samples + i * d);
    if (!std::isfinite(term))
      throw NumericsError("negative_log_likelihood: non-finite value at sample " + std::to_string(i));
    acc += term;
  }
  return acc / static_cast<double>(n) + 0.5 * d * std::log(2.0 * M_PI);
}

namespace {

// Cached per-sample quantities for one component's training objective.
struct ComponentObjective {
  const MonotoneComponent& proto;
  int k;       // 1-based component index
  int maxord;
  int quad;
  size_t n;
  size_t na;
  std::vector<double> prefix;  // n x na products over the k-1 prefix dims
  std::vector<double> zk;      // n diagonal inputs
  std::vector<double> he0;     // Hermite values at 0
  std::vector<int> diag_ord;   // alpha_k per basis term

  ComponentObjective(const MonotoneComponent& c, const double* samples, size_t n_, int d, int quad_)
      : proto(c), k(c.index), quad(quad_), n(n_) {
    na = c.multi_indices.size();
    maxord = 0;
    for (const auto& a : c.multi_indices)
      for (int v : a) maxord = std::max(maxord, v);
    he0.resize(maxord + 1);
    hermite_all(0.0, maxord, he0.data());
    diag_ord.resize(na);
    for (size_t a = 0; a < na; ++a) diag_ord[a] = c.multi_indices[a][k - 1];
    prefix.assign(n * na, 1.0);
    zk.resize(n);
    std::vector<double> he(static_cast<size_t>(maxord + 1));
    for (size_t i = 0; i < n; ++i) {
      const double* z = samples + i * d;
      zk[i] = z[k - 1];
      for (int j = 0; j < k - 1; ++j) {
        hermite_all(z[j], maxord, he.data());
        for (size_t a = 0; a < na; ++a) prefix[i * na + a] *= he[proto.multi_indices[a][j]];
      }
    }
  }

  // (1/n) sum_i [S_k^2/2 - log d_k S_k]; grad may be null.
  double eval(const double* c, double* grad) const {
    const GaussLegendre& q = gauss_legendre(quad);
    Rectifier rect = proto.rectifier;
    double obj = 0;
    if (grad) std::fill(grad, grad + na, 0.0);
    std::vector<double> he(static_cast<size_t>(maxord + 1));
    std::vector<double> gsum(na);  // per-beta integral of g' * dHe
    for (size_t i = 0; i < n; ++i) {
      const double* pf = &prefix[i * na];
      double zki = zk[i];
      double half = 0.5 * zki;
      double integral = 0;
      std::fill(gsum.begin(), gsum.end(), 0.0);
      for (int qi = 0; qi < quad; ++qi) {
        double t = half * (q.nodes[qi] + 1.0);
        hermite_all(t, maxord, he.data());
        double u = 0;
        for (size_t a = 0; a < na; ++a) {
          int ak = diag_ord[a];
          if (ak > 0) u += c[a] * pf[a] * ak * he[ak - 1];
        }
        double w = half * q.weights[qi];
        integral += w * rectifier_eval(rect, u);
        if (grad) {
          double wp = w * rectifier_deriv(rect, u);
          for (size_t a = 0; a < na; ++a) {
            int ak = diag_ord[a];
            if (ak > 0) gsum[a] += wp * ak * he[ak - 1];
          }
        }
      }
      double f0 = 0;
      for (size_t a = 0; a < na; ++a) f0 += c[a] * pf[a] * he0[diag_ord[a]];
      double S = f0 + integral;
      // diagonal derivative at t = z_k
      hermite_all(zki, maxord, he.data());
      double u_end = 0;
      for (size_t a = 0; a < na; ++a) {
        int ak = diag_ord[a];
        if (ak > 0) u_end += c[a] * pf[a] * ak * he[ak - 1];
      }
      double D = rectifier_eval(rect, u_end);
      double term = 0.5 * S * S - std::log(D);
      if (!std::isfinite(term))
        throw NumericsError("component training: non-finite objective at sample " + std::to_string(i));
      obj += term;
      if (grad) {
        double gp_end = rectifier_deriv(rect, u_end) / D;
        for (size_t a = 0; a < na; ++a) {
          int ak = diag_ord[a];
          double dS = pf[a] * (he0[ak] + gsum[a]);
          double dD = ak > 0 ? gp_end * pf[a] * ak * he[ak - 1] : 0.0;
          grad[a] += S * dS - dD;
        }
      }
    }
    double inv_n = 1.0 / static_cast<double>(n);
    if (grad)
      for (size_t a = 0; a < na; ++a) grad[a] *= inv_n;
    return obj * inv_n;
  }
};

MonotoneComponent make_proto(int k, const MapTrainingSpec& spec) {
  MonotoneComponent c;
  c.index = k;
  c.multi_indices = total_order_multi_indices(k, spec.total_order);
  c.coefficients.assign(c.multi_indices.size(), 0.0);
  c.rectifier = spec.rectifier;
  return c;
}

}  // namespace

double component_objective(const MonotoneComponent& c, const std::vector<double>& coeffs,
                           const double* samples, size_t n, int d, int quadrature_points, double* grad) {
  ComponentObjective obj(c, samples, n, d, quadrature_points);
  return obj.eval(coeffs.data(), grad);
}

MonotoneComponent train_component(int k, const double* samples, size_t n, int d, const MapTrainingSpec& spec,
                                  ComponentTrainingReport* report) {
  spec.validate();
  MonotoneComponent c = make_proto(k, spec);
  ComponentObjective obj(c, samples, n, d, spec.quadrature_points);

  // start from the identity component: S_k(z) = z_k
  std::vector<double> x0(c.multi_indices.size(), 0.0);
  for (size_t a = 0; a < c.multi_indices.size(); ++a) {
    const auto& mi = c.multi_indices[a];
    bool diag_linear = mi[k - 1] == 1;
    for (int j = 0; j < k - 1 && diag_linear; ++j) diag_linear = mi[j] == 0;
    if (diag_linear) {
      x0[a] = rectifier_inverse(spec.rectifier, 1.0);
      break;
    }
  }

  OptimOptions oo;
  oo.max_iters = spec.max_iters;
  oo.grad_tol = spec.grad_tol;
  OptimResult r = minimize_bfgs([&](const double* x, double* g) { return obj.eval(x, g); }, x0, oo);
  c.coefficients = r.x;
  if (report) {
    report->component = k;
    report->objective = r.f;
    report->grad_norm = r.grad_norm;
    report->iterations = r.iters;
    report->converged = r.converged;
  }
  return c;
}

TrainedMap train_map(const double* samples, size_t n, int d, const MapTrainingSpec& spec, unsigned jobs) {
  spec.validate();
  if (n == 0 || d < 1) throw InvalidParameterError("train_map: empty sample set");
  std::vector<double> scale, shift;
  std::vector<double> z(samples, samples + n * d);
  if (spec.standardize) {
    scale.resize(d);
    shift.resize(d);
    for (int j = 0; j < d; ++j) {
      double mean = 0;
      for (size_t i = 0; i < n; ++i) mean += z[i * d + j];
      mean /= static_cast<double>(n);
      double var = 0;
      for (size_t i = 0; i < n; ++i) {
        double dv = z[i * d + j] - mean;
        var += dv * dv;
      }
      var /= static_cast<double>(n > 1 ? n - 1 : 1);
      if (!(var > 0)) throw InvalidParameterError("train_map: degenerate coordinate " + std::to_string(j));
      double sd = std::sqrt(var);
      scale[j] = 1.0 / sd;
      shift[j] = -mean / sd;
      for (size_t i = 0; i < n; ++i) z[i * d + j] = (z[i * d + j] - mean) / sd;
    }
  }
  // sample-budget precondition, per component
  for (int k = 1; k <= d; ++k) {
    size_t ncoef = total_order_multi_indices(k, spec.total_order).size();
    if (n < 10 * ncoef)
      throw InvalidParameterError("train_map: need at least " + std::to_string(10 * ncoef) +
                                  " samples for component " + std::to_string(k));
  }

  std::vector<MonotoneComponent> comps(d);
  std::vector<ComponentTrainingReport> reports(d);
  if (jobs == 0) jobs = default_jobs();
  parallel_for(static_cast<size_t>(d), jobs, [&](size_t ki) {
    comps[ki] = train_component(static_cast<int>(ki) + 1, z.data(), n, d, spec, &reports[ki]);
  });

  TrainedMap out;
  out.map = make_triangular(std::move(comps), spec.quadrature_points, std::move(scale), std::move(shift));
  out.reports = std::move(reports);
  return out;
}

}  // namespace tmld
