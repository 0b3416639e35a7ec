#include "diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "errors.hpp"
#include "rng.hpp"
#include "util.hpp"

namespace tmld {

TestFunction test_function(const std::string& name, int dim) {
  TestFunction f;
  f.name = name;
  f.dim = dim;
  if (name == "sum") {
    f.eval = [dim](const double* y) {
      double s = 0;
      for (int i = 0; i < dim; ++i) s += y[i];
      return s;
    };
  } else if (name == "sum_sq") {
    f.eval = [dim](const double* y) {
      double s = 0;
      for (int i = 0; i < dim; ++i) s += y[i] * y[i];
      return s;
    };
  } else if (name == "coord1") {
    f.eval = [](const double* y) { return y[0]; };
  } else if (name == "coord1_sq") {
    f.eval = [](const double* y) { return y[0] * y[0]; };
  } else if (name == "banana_poly") {
    // y1^2 + y1 + y2^2 + y2, the banana study observable
    f.eval = [](const double* y) { return y[0] * y[0] + y[0] + y[1] * y[1] + y[1]; };
  } else if (name == "exp_gamma") {
    f.eval = [](const double* y) { return std::exp(y[1]); };
  } else if (name == "mu_plus_gamma") {
    f.eval = [](const double* y) { return y[0] + y[1]; };
  } else if (name == "mu2_plus_gamma2") {
    f.eval = [](const double* y) { return y[0] * y[0] + y[1] * y[1]; };
  } else {
    throw InvalidParameterError("unknown test function \"" + name + "\"");
  }
  return f;
}

double ergodic_average(const double* phis, size_t n) {
  if (n == 0) throw InvalidParameterError("ergodic_average: empty series");
  return pairwise_sum(phis, n) / static_cast<double>(n);
}

double ergodic_average(const Chain& chain, const TestFunction& phi, size_t burn_in) {
  size_t rows = chain.rows();
  if (burn_in >= rows) throw InvalidParameterError("ergodic_average: burn-in exceeds chain length");
  std::vector<double> vals(rows - burn_in);
  for (size_t i = burn_in; i < rows; ++i) vals[i - burn_in] = phi.eval(chain.row(i));
  return ergodic_average(vals.data(), vals.size());
}

double batch_means_avar(const double* phis, size_t n) {
  if (n < 100) throw InvalidParameterError("batch_means_avar: need at least 100 retained values");
  size_t M = static_cast<size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  size_t B = n / M;
  std::vector<double> means(M);
  for (size_t m = 0; m < M; ++m) means[m] = pairwise_sum(phis + m * B, B) / static_cast<double>(B);
  double grand = pairwise_sum(means.data(), M) / static_cast<double>(M);
  double var = 0;
  for (double v : means) var += (v - grand) * (v - grand);
  var /= static_cast<double>(M - 1);
  return static_cast<double>(B) * var;
}

double batch_means_avar(const Chain& chain, const TestFunction& phi, size_t burn_in) {
  size_t rows = chain.rows();
  if (burn_in >= rows) throw InvalidParameterError("batch_means_avar: burn-in exceeds chain length");
  std::vector<double> vals(rows - burn_in);
  for (size_t i = burn_in; i < rows; ++i) vals[i - burn_in] = phi.eval(chain.row(i));
  return batch_means_avar(vals.data(), vals.size());
}

// ---- kernelized Stein discrepancy ---------------------------------------------------

double ksd(const double* points, size_t n, int d, const std::function<void(const double*, double*)>& score,
           KsdKernel kernel, unsigned jobs, bool u_statistic) {
  if (n < (u_statistic ? 2u : 1u)) throw InvalidParameterError("ksd: need at least two points");
  if (!(kernel.c > 0) || !(kernel.beta < 0)) throw InvalidParameterError("ksd: need c > 0 and beta < 0");
  const double c2 = kernel.c * kernel.c;
  const double beta = kernel.beta;

  std::vector<double> scores(n * d);
  for (size_t i = 0; i < n; ++i) {
    score(points + i * d, &scores[i * d]);
    for (int j = 0; j < d; ++j)
      if (!std::isfinite(scores[i * d + j]))
        throw NumericsError("ksd: non-finite score at point " + std::to_string(i));
  }

  auto stein_kernel = [&](size_t i, size_t j) {
    const double* xi = points + i * d;
    const double* si = &scores[i * d];
    const double* xj = points + j * d;
    const double* sj = &scores[j * d];
    double r2 = 0, dot_ds_j = 0, dot_ds_i = 0, dot_ss = 0;
    for (int t = 0; t < d; ++t) {
      double delta = xi[t] - xj[t];
      r2 += delta * delta;
      dot_ds_j += delta * sj[t];  // (x - y) . s(y)
      dot_ds_i += delta * si[t];  // (x - y) . s(x)
      dot_ss += si[t] * sj[t];
    }
    double u = c2 + r2;
    double ub1 = std::pow(u, beta - 1.0);
    double ub2 = ub1 / u;
    double k = ub1 * u;  // u^beta
    // k0 = div_x div_y k + grad_x k . s(y) + grad_y k . s(x) + k s(x).s(y)
    double div2 = -2.0 * beta * (2.0 * (beta - 1.0) * ub2 * r2 + d * ub1);
    double gxk_sy = 2.0 * beta * ub1 * dot_ds_j;
    double gyk_sx = -2.0 * beta * ub1 * dot_ds_i;
    return div2 + gxk_sy + gyk_sx + k * dot_ss;
  };

  if (jobs == 0) jobs = default_jobs();
  double total;
  if (n <= 4096) {
    // canonical reduction: sorting the pair values makes the sum a function of
    // their multiset, so the result is exactly permutation-invariant
    std::vector<double> vals;
    vals.reserve(n * n);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) {
        if (u_statistic && j == i) continue;
        vals.push_back(stein_kernel(i, j));
      }
    std::sort(vals.begin(), vals.end());
    total = pairwise_sum(vals);
  } else {
    std::vector<double> row_sums(n, 0.0);
    parallel_for(n, jobs, [&](size_t i) {
      double acc = 0;
      for (size_t j = 0; j < n; ++j) {
        if (u_statistic && j == i) continue;
        acc += stein_kernel(i, j);
      }
      row_sums[i] = acc;
    });
    total = pairwise_sum(row_sums);
  }
  double denom = u_statistic ? static_cast<double>(n) * (n - 1) : static_cast<double>(n) * n;
  double v = total / denom;
  return std::sqrt(std::max(v, 0.0));
}

double ksd(const double* points, size_t n, const Target& target, KsdKernel kernel, unsigned jobs,
           bool u_statistic) {
  return ksd(
      points, n, target.dim(), [&](const double* y, double* g) { target.grad_log_density(y, g); }, kernel,
      jobs, u_statistic);
}

// ---- Wasserstein bound ----------------------------------------------------------------

double wasserstein_bound(double m, double L, double h, long k, int d, double dist0_sq, double rho) {
  if (!(m > 0) || !(L >= m)) throw InvalidParameterError("wasserstein_bound: need 0 < m <= L");
  if (!(rho > 0)) throw InvalidParameterError("wasserstein_bound: rho must be positive");
  if (k < 0) throw InvalidParameterError("wasserstein_bound: k must be nonnegative");
  if (dist0_sq < 0) throw InvalidParameterError("wasserstein_bound: dist0_sq must be nonnegative");
  double hmax = 1.0 / (m + L);
  if (!(h > 0) || h > hmax * (1.0 + 1e-12))
    throw InvalidParameterError("wasserstein_bound: step size must satisfy 0 < h <= 1/(m+L)");
  double kappa = 2.0 * m * L / (m + L);
  double C = (2.0 * L * L * d / kappa) * (h * (1.0 / kappa + h)) *
             (2.0 + L * L * h / m + L * L * h * h / 6.0);
  double rate = 1.0 - kappa * h / 2.0;
  double transient = std::pow(rate, static_cast<double>(k)) * (2.0 * dist0_sq + 2.0 * d / m - C);
  return (transient + C) / (rho * rho);
}

double gaussian_w2_squared(const std::vector<double>& mean1, const la::Mat& cov1,
                           const std::vector<double>& mean2, const la::Mat& cov2) {
  int d = static_cast<int>(mean1.size());
  if (static_cast<int>(mean2.size()) != d || cov1.rows != d || cov2.rows != d)
    throw InvalidParameterError("gaussian_w2: dimension mismatch");
  auto check_sym_psd = [&](const la::Mat& c, const char* which) {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        if (std::fabs(c(i, j) - c(j, i)) > 1e-10)
          throw InvalidParameterError(std::string("gaussian_w2: ") + which + " not symmetric");
    std::vector<double> w;
    la::Mat V;
    la::sym_eig(c, w, V);
    for (double v : w)
      if (v < -1e-10) throw InvalidParameterError(std::string("gaussian_w2: ") + which + " not PSD");
  };
  check_sym_psd(cov1, "cov1");
  check_sym_psd(cov2, "cov2");
  double mean_term = 0;
  for (int i = 0; i < d; ++i) {
    double dm = mean1[i] - mean2[i];
    mean_term += dm * dm;
  }
  la::Mat s2 = la::sym_sqrt(cov2);
  la::Mat inner = la::mat_mul(la::mat_mul(s2, cov1), s2);
  // symmetrize against roundoff before the square root
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      double v = 0.5 * (inner(i, j) + inner(j, i));
      inner(i, j) = inner(j, i) = v;
    }
  la::Mat cross = la::sym_sqrt(inner);
  double tr = 0;
  for (int i = 0; i < d; ++i) tr += cov1(i, i) + cov2(i, i) - 2.0 * cross(i, i);
  return mean_term + tr;
}

// ---- bias sweep -------------------------------------------------------------------------

BiasSweepResult bias_sweep(const Target& target, const SamplerConfig& config_template,
                           const TestFunction& phi, double truth, const std::vector<double>& h_list,
                           double time_horizon, const std::vector<double>& y0, uint64_t seed,
                           double burn_in_fraction, unsigned jobs) {
  if (h_list.empty()) throw InvalidParameterError("bias_sweep: empty step-size list");
  BiasSweepResult out;
  out.rows.resize(h_list.size());
  if (jobs == 0) jobs = default_jobs();
  parallel_for(h_list.size(), jobs, [&](size_t idx) {
    double h = h_list[idx];
    SamplerConfig cfg = config_template;
    cfg.h = h;
    size_t K = static_cast<size_t>(std::llround(time_horizon / h));
    size_t burn = static_cast<size_t>(burn_in_fraction * static_cast<double>(K));
    size_t retained = K - burn;
    // streaming batch-means accumulation over the retained stretch
    size_t M = std::max<size_t>(static_cast<size_t>(std::floor(std::sqrt(double(retained)))), 1);
    size_t B = std::max<size_t>(retained / M, 1);
    std::vector<double> batch_sums(M, 0.0);
    double acc = 0;
    size_t count = 0;
    auto on_state = [&](size_t k, const double* y) {
      if (k <= burn) return;  // row 0 and burn-in excluded
      double v = phi.eval(y);
      acc += v;
      size_t r = count;
      ++count;
      size_t b = r / B;
      if (b < M) batch_sums[b] += v;
    };
    auto diverged = run_chain_streaming(target, cfg, y0, K, seed, idx, on_state);
    BiasSweepRow& row = out.rows[idx];
    row.h = h;
    row.steps = K;
    row.diverged = diverged.has_value();
    if (count == 0) {
      row.diverged = true;
      return;
    }
    row.estimate = acc / static_cast<double>(count);
    row.e_hat = row.estimate - truth;
    row.e_over_h = row.e_hat / h;
    if (!row.diverged && count >= 100) {
      double grand = 0;
      for (size_t m = 0; m < M; ++m) grand += batch_sums[m] / static_cast<double>(B);
      grand /= static_cast<double>(M);
      double var = 0;
      for (size_t m = 0; m < M; ++m) {
        double mv = batch_sums[m] / static_cast<double>(B) - grand;
        var += mv * mv;
      }
      var /= static_cast<double>(M > 1 ? M - 1 : 1);
      row.avar = static_cast<double>(B) * var * h;  // physical-time units
    }
  });
  double lam = 0;
  size_t nok = 0;
  for (const auto& row : out.rows)
    if (!row.diverged) {
      lam += row.e_over_h;
      ++nok;
    }
  out.lambda1_hat = nok > 0 ? -lam / static_cast<double>(nok) : 0.0;
  return out;
}

// ---- multi-chain MSE study -----------------------------------------------------------

MseStudy mse_study(const Target& target,
                   const std::vector<std::pair<std::string, SamplerConfig>>& configs,
                   const TestFunction& phi, double truth, int n_chains, size_t K,
                   const std::vector<double>& y0, uint64_t seed, double burn_in_fraction, unsigned jobs) {
  if (n_chains < 1) throw InvalidParameterError("mse_study: need at least one chain");
  MseStudy study;
  study.truth = truth;
  // geometric checkpoint grid
  std::vector<size_t> checkpoints;
  size_t burn = static_cast<size_t>(burn_in_fraction * static_cast<double>(K));
  size_t usable = K - burn;
  for (double f = 0.01; f < 1.0; f *= 1.7782794100389228) {  // 10^(1/4) spacing
    size_t len = static_cast<size_t>(f * static_cast<double>(usable));
    if (len >= 10) checkpoints.push_back(len);
  }
  checkpoints.push_back(usable);

  if (jobs == 0) jobs = default_jobs();
  for (const auto& [label, cfg] : configs) {
    MseConfigResult res;
    res.label = label;
    res.n_chains = static_cast<size_t>(n_chains);
    std::vector<std::vector<double>> chain_curves(n_chains);
    std::vector<double> chain_avars(n_chains, std::numeric_limits<double>::quiet_NaN());
    std::vector<char> ok(n_chains, 0);
    parallel_for(static_cast<size_t>(n_chains), jobs, [&](size_t c) {
      std::vector<double> curve;
      curve.reserve(checkpoints.size());
      double acc = 0;
      size_t count = 0, next_cp = 0;
      std::vector<double> phis;
      phis.reserve(usable);
      auto on_state = [&](size_t k, const double* y) {
        if (k <= burn) return;
        double v = phi.eval(y);
        acc += v;
        phis.push_back(v);
        ++count;
        while (next_cp < checkpoints.size() && count == checkpoints[next_cp]) {
          curve.push_back(acc / static_cast<double>(count));
          ++next_cp;
        }
      };
      auto diverged = run_chain_streaming(target, cfg, y0, K, seed, 1000 + c, on_state);
      if (!diverged && curve.size() == checkpoints.size()) {
        ok[c] = 1;
        chain_curves[c] = std::move(curve);
        if (phis.size() >= 100) chain_avars[c] = batch_means_avar(phis.data(), phis.size());
      }
    });
    size_t nok = 0;
    for (char o : ok) nok += o;
    res.n_diverged = static_cast<size_t>(n_chains) - nok;
    if (nok > 0) {
      for (size_t cp = 0; cp < checkpoints.size(); ++cp) {
        double mean = 0;
        for (int c = 0; c < n_chains; ++c)
          if (ok[c]) mean += chain_curves[c][cp];
        mean /= static_cast<double>(nok);
        double var = 0;
        for (int c = 0; c < n_chains; ++c)
          if (ok[c]) {
            double dv = chain_curves[c][cp] - mean;
            var += dv * dv;
          }
        var /= static_cast<double>(nok);  // population variance: mse = bias^2 + var exactly
        MseCurvePoint pt;
        pt.length = checkpoints[cp];
        pt.bias = mean - truth;
        pt.variance = var;
        pt.mse = pt.bias * pt.bias + var;
        res.curve.push_back(pt);
      }
      RunningStats avar_stats;
      for (int c = 0; c < n_chains; ++c)
        if (ok[c] && std::isfinite(chain_avars[c])) avar_stats.add(chain_avars[c]);
      res.avar_mean = avar_stats.mean;
      res.avar_std = std::sqrt(avar_stats.variance());
    }
    study.configs.push_back(std::move(res));
  }
  return study;
}

}  // namespace tmld
