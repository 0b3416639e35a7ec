#include "samplers.hpp"

#include <cmath>
#include <cstring>

#include "errors.hpp"
#include "io.hpp"
#include "rng.hpp"

namespace tmld {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::ula: return "ula";
    case Scheme::tmula: return "tmula";
    case Scheme::emrmld: return "emrmld";
    case Scheme::tmula_irr: return "tmula_irr";
    case Scheme::tmuila: return "tmuila";
    case Scheme::uila: return "uila";
    case Scheme::rmld: return "rmld";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "ula") return Scheme::ula;
  if (s == "tmula") return Scheme::tmula;
  if (s == "emrmld") return Scheme::emrmld;
  if (s == "tmula_irr") return Scheme::tmula_irr;
  if (s == "tmuila") return Scheme::tmuila;
  if (s == "uila") return Scheme::uila;
  if (s == "rmld") return Scheme::rmld;
  throw InvalidParameterError("unknown scheme \"" + s + "\"");
}

void SamplerConfig::validate(int target_dim) const {
  if (!(h >= 0)) throw InvalidParameterError("sampler config: step size must be nonnegative");
  bool needs_map = scheme == Scheme::tmula || scheme == Scheme::emrmld || scheme == Scheme::tmula_irr ||
                   scheme == Scheme::tmuila;
  if (needs_map) {
    if (!map) throw InvalidParameterError("sampler config: scheme " + to_string(scheme) + " requires a map");
    if (map->dim() != target_dim) throw InvalidParameterError("sampler config: map/target dimension mismatch");
  }
  if (scheme == Scheme::rmld) {
    if (!metric) throw InvalidParameterError("sampler config: rmld requires a metric");
    if (metric->dim() != target_dim)
      throw InvalidParameterError("sampler config: metric/target dimension mismatch");
  }
  if (skew) {
    const la::Mat& D = *skew;
    if (D.rows != target_dim || D.cols != target_dim)
      throw InvalidParameterError("sampler config: skew matrix shape mismatch");
    double worst = 0;
    for (int i = 0; i < D.rows; ++i) {
      double rowsum = 0;
      for (int j = 0; j < D.cols; ++j) rowsum += std::fabs(D(i, j) + D(j, i));
      worst = std::max(worst, rowsum);
    }
    if (worst > 1e-12)
      throw InvalidParameterError("sampler config: skew matrix violates D + D^T = 0");
  }
  if (scheme == Scheme::tmula_irr && !skew)
    throw InvalidParameterError("sampler config: tmula_irr requires a skew matrix");
}

// ---- metric: funnel expected-Fisher form -------------------------------------------

namespace {

class FunnelGcMetric final : public Metric {
 public:
  FunnelGcMetric(size_t n_data, double beta) : n_(static_cast<double>(n_data)), beta_(beta) {}

  int dim() const override { return 2; }

  void B(const double* y, double* out) const override {
    double g = y[1];
    out[0] = 1.0 / (2.0 * n_ * beta_ + std::exp(g));
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = 1.0 / (n_ * std::exp(-2.0 * g) + 1.0 / 3.0);
  }

  void div_B(const double* y, double* out) const override {
    double g = y[1];
    double denom = n_ * std::exp(-2.0 * g) + 1.0 / 3.0;
    out[0] = 0.0;  // B11 depends only on gamma, and row 1 differentiates in mu
    out[1] = 2.0 * n_ * std::exp(-2.0 * g) / (denom * denom);
  }

  void sqrtB_apply(const double* y, const double* xi, double* out) const override {
    double g = y[1];
    out[0] = xi[0] / std::sqrt(2.0 * n_ * beta_ + std::exp(g));
    out[1] = xi[1] / std::sqrt(n_ * std::exp(-2.0 * g) + 1.0 / 3.0);
  }

  std::string name() const override { return "funnel_gc"; }

 private:
  double n_, beta_;
};

thread_local std::vector<double> tl_buf_a, tl_buf_b, tl_buf_c, tl_buf_J;

void ensure(std::vector<double>& v, size_t n) {
  if (v.size() < n) v.resize(n);
}

void solve_with(const Map& map, const double* J, int d, const double* rhs, double* out) {
  if (map.lower_triangular()) {
    la::solve_lower(J, d, rhs, out);
  } else {
    la::solve(J, d, rhs, out);
  }
}

}  // namespace

MetricPtr funnel_gc_metric(size_t n_data, double beta) {
  return std::make_shared<FunnelGcMetric>(n_data, beta);
}

// ---- steps ---------------------------------------------------------------------------

void ula_step(const Target& target, const double* y, double h, const double* xi, double* y_out) {
  int d = target.dim();
  ensure(tl_buf_a, d);
  double* g = tl_buf_a.data();
  target.grad_log_density(y, g);
  double sq = std::sqrt(2.0 * h);
  for (int i = 0; i < d; ++i) {
    double v = y[i] + h * g[i] + sq * xi[i];
    if (!std::isfinite(v)) throw NumericsError("ula step produced a non-finite state");
    y_out[i] = v;
  }
}

void tmula_step(const Target& target, const Map& map, const double* x, const double* y, double h,
                const double* xi, double* x_out, double* y_out) {
  int d = map.dim();
  ensure(tl_buf_b, d);
  double* g = tl_buf_b.data();
  pushforward_grad_log_density(target, map, x, g, y);
  double sq = std::sqrt(2.0 * h);
  for (int i = 0; i < d; ++i) x_out[i] = x[i] + h * g[i] + sq * xi[i];
  map.inverse(x_out, y_out);
}

void emrmld_step(const Target& target, const Map& map, const double* y, double h, const double* xi,
                 double* y_out) {
  int d = map.dim();
  ensure(tl_buf_a, 3 * static_cast<size_t>(d));
  ensure(tl_buf_J, static_cast<size_t>(d) * d);
  double* grad = tl_buf_a.data();
  double* tmp = grad + d;
  double* drift = tmp + d;
  double* J = tl_buf_J.data();
  target.grad_log_density(y, grad);
  map.jacobian(y, J);
  // B grad = J^{-1} J^{-T} grad
  if (map.lower_triangular()) {
    la::solve_lower_transposed(J, d, grad, tmp);
    la::solve_lower(J, d, tmp, drift);
  } else {
    la::Mat Jt(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) Jt(i, j) = J[static_cast<size_t>(j) * d + i];
    la::solve(Jt.data(), d, grad, tmp);
    la::solve(J, d, tmp, drift);
  }
  ensure(tl_buf_c, 2 * static_cast<size_t>(d));
  double* div = tl_buf_c.data();
  double* noise = div + d;
  map.metric_divergence(y, div);
  solve_with(map, J, d, xi, noise);
  double sq = std::sqrt(2.0 * h);
  for (int i = 0; i < d; ++i) y_out[i] = y[i] + h * (drift[i] + div[i]) + sq * noise[i];
}

void reference_irr_step(const Target& target, const Map& map, const double* x, const double* y, double h,
                        const double* xi, const la::Mat& D, double* x_out, double* y_out) {
  int d = map.dim();
  ensure(tl_buf_b, 2 * static_cast<size_t>(d));
  double* g = tl_buf_b.data();
  double* Dg = g + d;
  pushforward_grad_log_density(target, map, x, g, y);
  la::mat_vec(D.data(), d, d, g, Dg);
  double sq = std::sqrt(2.0 * h);
  for (int i = 0; i < d; ++i) x_out[i] = x[i] + h * (g[i] + Dg[i]) + sq * xi[i];
  map.inverse(x_out, y_out);
}

namespace {

// Damped Newton for r(u) = u - base - h * drift(u) = 0, with the Jacobian of
// drift obtained by central differences. Returns false on non-convergence.
bool damped_newton(const std::function<void(const double*, double*)>& drift, const double* base, double h,
                   int d, const ImplicitSolverOpts& opts, double* u) {
  std::vector<double> r(d), dr(d), up(d), dp(d), dm(d), Jr(static_cast<size_t>(d) * d), step(d), utrial(d),
      rtrial(d);
  auto residual = [&](const double* uu, double* rr) {
    drift(uu, dr.data());
    for (int i = 0; i < d; ++i) rr[i] = uu[i] - base[i] - h * dr[i];
  };
  std::copy(base, base + d, u);
  residual(u, r.data());
  double rn = la::norm2(r.data(), d);
  for (int it = 0; it < opts.max_iters; ++it) {
    if (rn <= opts.tol * (1.0 + la::norm2(base, d))) return true;
    double fd = 1e-6 * (1.0 + la::norm_inf(u, d));
    for (int j = 0; j < d; ++j) {
      std::copy(u, u + d, up.data());
      up[j] = u[j] + fd;
      drift(up.data(), dp.data());
      up[j] = u[j] - fd;
      drift(up.data(), dm.data());
      for (int i = 0; i < d; ++i)
        Jr[static_cast<size_t>(i) * d + j] = (i == j ? 1.0 : 0.0) - h * (dp[i] - dm[i]) / (2 * fd);
    }
    for (int i = 0; i < d; ++i) r[i] = -r[i];
    la::solve(Jr.data(), d, r.data(), step.data());
    double alpha = 1.0;
    bool accepted = false;
    for (int halve = 0; halve <= opts.max_halvings; ++halve) {
      for (int i = 0; i < d; ++i) utrial[i] = u[i] + alpha * step[i];
      residual(utrial.data(), rtrial.data());
      double rtn = la::norm2(rtrial.data(), d);
      if (std::isfinite(rtn) && rtn < rn) {
        std::copy(utrial.begin(), utrial.end(), u);
        std::copy(rtrial.begin(), rtrial.end(), r.begin());
        rn = rtn;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) return rn <= opts.tol * (1.0 + la::norm2(base, d));
  }
  return rn <= opts.tol * (1.0 + la::norm2(base, d));
}

}  // namespace

void tmuila_step(const Target& target, const Map& map, const double* y, double h, const double* xi,
                 const ImplicitSolverOpts& solver, double* y_out) {
  int d = map.dim();
  std::vector<double> base(d), u(d), xnext(d);
  map.forward(y, base.data());
  auto drift = [&](const double* uu, double* out) { pushforward_grad_log_density(target, map, uu, out); };
  if (!damped_newton(drift, base.data(), h, d, solver, u.data()))
    throw NumericsError("tmuila: implicit solve did not converge");
  double sq = std::sqrt(2.0 * h);
  for (int i = 0; i < d; ++i) xnext[i] = u[i] + sq * xi[i];
  map.inverse(xnext.data(), y_out);
}

void uila_step(const Target& target, const double* y, double h, const double* xi,
               const ImplicitSolverOpts& solver, double* y_out) {
  int d = target.dim();
  std::vector<double> u(d);
  auto drift = [&](const double* uu, double* out) { target.grad_log_density(uu, out); };
  if (!damped_newton(drift, y, h, d, solver, u.data()))
    throw NumericsError("uila: implicit solve did not converge");
  double sq = std::sqrt(2.0 * h);
  for (int i = 0; i < d; ++i) y_out[i] = u[i] + sq * xi[i];
}

void rmld_step(const Target& target, const Metric& metric, const double* y, double h, const double* xi,
               double* y_out) {
  int d = target.dim();
  ensure(tl_buf_a, 4 * static_cast<size_t>(d));
  ensure(tl_buf_J, static_cast<size_t>(d) * d);
  double* grad = tl_buf_a.data();
  double* Bg = grad + d;
  double* div = Bg + d;
  double* noise = div + d;
  double* B = tl_buf_J.data();
  target.grad_log_density(y, grad);
  metric.B(y, B);
  la::mat_vec(B, d, d, grad, Bg);
  metric.div_B(y, div);
  metric.sqrtB_apply(y, xi, noise);
  double sq = std::sqrt(2.0 * h);
  for (int i = 0; i < d; ++i) y_out[i] = y[i] + h * (Bg[i] + div[i]) + sq * noise[i];
}

// ---- chain runner -----------------------------------------------------------------

namespace {

bool finite_and_bounded(const double* v, int d) {
  for (int i = 0; i < d; ++i)
    if (!std::isfinite(v[i]) || std::fabs(v[i]) > kDivergenceThreshold) return false;
  return true;
}

}  // namespace

std::optional<size_t> run_chain_streaming(const Target& target, const SamplerConfig& config,
                                          const std::vector<double>& y0, size_t K, uint64_t seed,
                                          uint64_t stream_id,
                                          const std::function<void(size_t, const double*)>& on_state) {
  int d = target.dim();
  config.validate(d);
  if (static_cast<int>(y0.size()) != d) throw InvalidParameterError("run_chain: initial state dimension");
  rng::Stream noise(seed, stream_id);

  bool reference_space = config.scheme == Scheme::tmula || config.scheme == Scheme::tmula_irr;
  std::vector<double> y(y0), ynext(d), x(d), xnext(d), xi(d);
  if (reference_space) config.map->forward(y.data(), x.data());

  on_state(0, y.data());
  for (size_t k = 1; k <= K; ++k) {
    noise.normals(k - 1, xi.data(), d);
    try {
      switch (config.scheme) {
        case Scheme::ula:
          ula_step(target, y.data(), config.h, xi.data(), ynext.data());
          break;
        case Scheme::tmula:
          tmula_step(target, *config.map, x.data(), y.data(), config.h, xi.data(), xnext.data(),
                     ynext.data());
          break;
        case Scheme::emrmld:
          emrmld_step(target, *config.map, y.data(), config.h, xi.data(), ynext.data());
          break;
        case Scheme::tmula_irr:
          reference_irr_step(target, *config.map, x.data(), y.data(), config.h, xi.data(), *config.skew,
                             xnext.data(), ynext.data());
          break;
        case Scheme::tmuila:
          tmuila_step(target, *config.map, y.data(), config.h, xi.data(), config.implicit_solver,
                      ynext.data());
          break;
        case Scheme::uila:
          uila_step(target, y.data(), config.h, xi.data(), config.implicit_solver, ynext.data());
          break;
        case Scheme::rmld:
          rmld_step(target, *config.metric, y.data(), config.h, xi.data(), ynext.data());
          break;
      }
    } catch (const NumericsError&) {
      return k;
    }
    if (!finite_and_bounded(ynext.data(), d)) return k;
    if (reference_space && !finite_and_bounded(xnext.data(), d)) return k;
    y.swap(ynext);
    if (reference_space) x.swap(xnext);
    on_state(k, y.data());
  }
  return std::nullopt;
}

Chain run_chain(const Target& target, const SamplerConfig& config, const std::vector<double>& y0, size_t K,
                uint64_t seed, uint64_t stream_id) {
  int d = target.dim();
  Chain chain;
  chain.scheme = config.scheme;
  chain.h = config.h;
  chain.seed = seed;
  chain.dim = d;
  chain.states.reserve((K + 1) * d);
  chain.diverged_at = run_chain_streaming(target, config, y0, K, seed, stream_id,
                                          [&](size_t, const double* y) {
                                            chain.states.insert(chain.states.end(), y, y + d);
                                          });
  return chain;
}

void write_chain_csv(const Chain& chain, const std::string& path) {
  std::vector<std::string> header;
  header.push_back("step");
  for (int j = 1; j <= chain.dim; ++j) header.push_back("y_" + std::to_string(j));
  size_t rows = chain.rows();
  std::vector<double> table(rows * (chain.dim + 1));
  for (size_t i = 0; i < rows; ++i) {
    table[i * (chain.dim + 1)] = static_cast<double>(i);
    for (int j = 0; j < chain.dim; ++j) table[i * (chain.dim + 1) + 1 + j] = chain.row(i)[j];
  }
  io::write_csv(path, header, table.data(), rows, chain.dim + 1);
}

Chain read_chain_csv(const std::string& path) {
  io::CsvTable t = io::read_csv(path);
  if (t.cols < 2 || t.header.empty() || t.header[0] != "step")
    throw SchemaError("chain csv: expected a step,y_1.. header in " + path);
  Chain c;
  c.dim = static_cast<int>(t.cols) - 1;
  c.states.reserve(t.rows * c.dim);
  for (size_t i = 0; i < t.rows; ++i)
    for (int j = 0; j < c.dim; ++j) c.states.push_back(t(i, 1 + j));
  return c;
}

}  // namespace tmld
