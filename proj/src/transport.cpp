#include "transport.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "hermite.hpp"
#include "io.hpp"
#include "quadrature.hpp"
#include "targets.hpp"

namespace tmld {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(MapKind k) {
  switch (k) {
    case MapKind::affine: return "affine";
    case MapKind::banana: return "banana";
    case MapKind::rosenbrock: return "rosenbrock";
    case MapKind::triangular: return "triangular";
    case MapKind::composed: return "composed";
  }
  return "?";
}

std::string to_string(Rectifier g) { return g == Rectifier::softplus ? "softplus" : "shifted-elu"; }

Rectifier rectifier_from_string(const std::string& s) {
  if (s == "softplus") return Rectifier::softplus;
  if (s == "shifted-elu") return Rectifier::shifted_elu;
  throw SchemaError("unknown rectifier: " + s);
}

double rectifier_eval(Rectifier g, double x) {
  if (g == Rectifier::softplus) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(std::max(x, -690.0));  // strictly positive, no underflow to 0
    return std::log1p(std::exp(x));
  }
  if (x >= 0.0) return x + 1.0;
  return std::exp(std::max(x, -690.0));
}

double rectifier_deriv(Rectifier g, double x) {
  if (g == Rectifier::softplus) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
  }
  return x >= 0.0 ? 1.0 : std::exp(x);
}

double rectifier_inverse(Rectifier g, double v) {
  if (v <= 0.0) throw InvalidParameterError("rectifier_inverse: value must be positive");
  if (g == Rectifier::softplus) {
    if (v > 30.0) return v;
    return std::log(std::expm1(v));
  }
  return v >= 1.0 ? v - 1.0 : std::log(v);
}

// ---- Map base defaults -------------------------------------------------------

std::vector<double> Map::forward(const std::vector<double>& y) const {
  std::vector<double> x(dim_);
  forward(y.data(), x.data());
  return x;
}

std::vector<double> Map::inverse(const std::vector<double>& x) const {
  std::vector<double> y(dim_);
  inverse(x.data(), y.data());
  return y;
}

la::Mat Map::jacobian_mat(const std::vector<double>& y) const {
  la::Mat J(dim_, dim_);
  jacobian(y.data(), J.data());
  return J;
}

double Map::log_det_jacobian(const double* y) const {
  int d = dim_;
  std::vector<double> J(static_cast<size_t>(d) * d);
  jacobian(y, J.data());
  if (lower_triangular()) {
    double s = 0;
    for (int i = 0; i < d; ++i) {
      double dii = J[static_cast<size_t>(i) * d + i];
      if (!(dii > 0)) throw NumericsError("log_det_jacobian: nonpositive diagonal entry");
      s += std::log(dii);
    }
    return s;
  }
  std::vector<int> perm(d);
  la::lu_factor(J.data(), d, perm.data());
  return la::lu_log_abs_det(J.data(), d);
}

void Map::grad_log_det(const double* y, double* g) const {
  int d = dim_;
  if (lower_triangular()) {
    std::vector<double> J(static_cast<size_t>(d) * d), H(static_cast<size_t>(d) * d);
    jacobian(y, J.data());
    component_hessian_vectors(y, H.data());
    for (int j = 0; j < d; ++j) {
      double s = 0;
      for (int i = 0; i < d; ++i) s += H[static_cast<size_t>(i) * d + j] / J[static_cast<size_t>(i) * d + i];
      g[j] = s;
    }
    return;
  }
  double step = 1e-5 * (1.0 + la::norm_inf(y, d));
  std::vector<double> yp(y, y + d);
  for (int j = 0; j < d; ++j) {
    yp[j] = y[j] + step;
    double up = log_det_jacobian(yp.data());
    yp[j] = y[j] - step;
    double um = log_det_jacobian(yp.data());
    yp[j] = y[j];
    g[j] = (up - um) / (2 * step);
  }
}

void Map::component_hessian_vectors(const double* y, double* H) const {
  int d = dim_;
  double step = 1e-5 * (1.0 + la::norm_inf(y, d));
  std::vector<double> yp(y, y + d), Jp(static_cast<size_t>(d) * d), Jm(static_cast<size_t>(d) * d);
  for (int j = 0; j < d; ++j) {
    yp[j] = y[j] + step;
    jacobian(yp.data(), Jp.data());
    yp[j] = y[j] - step;
    jacobian(yp.data(), Jm.data());
    yp[j] = y[j];
    for (int i = 0; i < d; ++i)
      H[static_cast<size_t>(i) * d + j] =
          (Jp[static_cast<size_t>(i) * d + i] - Jm[static_cast<size_t>(i) * d + i]) / (2 * step);
  }
}

void Map::inverse_hessian(const double* x, double* H) const {
  int d = dim_;
  double step = 1e-4 * (1.0 + la::norm_inf(x, d));
  auto at = [&](double* pt, std::vector<double>& y) { inverse(pt, y.data()); };
  std::vector<double> xp(x, x + d), y0(d), ypp(d), ypm(d), ymp(d), ymm(d);
  at(xp.data(), y0);
  for (int i = 0; i < d; ++i) {
    for (int l = i; l < d; ++l) {
      if (i == l) {
        xp[i] = x[i] + step;
        at(xp.data(), ypp);
        xp[i] = x[i] - step;
        at(xp.data(), ymm);
        xp[i] = x[i];
        for (int k = 0; k < d; ++k)
          H[(static_cast<size_t>(k) * d + i) * d + i] = (ypp[k] - 2 * y0[k] + ymm[k]) / (step * step);
      } else {
        xp[i] = x[i] + step;
        xp[l] = x[l] + step;
        at(xp.data(), ypp);
        xp[l] = x[l] - step;
        at(xp.data(), ypm);
        xp[i] = x[i] - step;
        xp[l] = x[l] + step;
        at(xp.data(), ymp);
        xp[l] = x[l] - step;
        at(xp.data(), ymm);
        xp[i] = x[i];
        xp[l] = x[l];
        for (int k = 0; k < d; ++k) {
          double v = (ypp[k] - ypm[k] - ymp[k] + ymm[k]) / (4 * step * step);
          H[(static_cast<size_t>(k) * d + i) * d + l] = v;
          H[(static_cast<size_t>(k) * d + l) * d + i] = v;
        }
      }
    }
  }
}

void Map::metric_divergence(const double* y, double* out) const {
  int d = dim_;
  double step = 1e-5 * (1.0 + la::norm_inf(y, d));
  std::vector<double> yp(y, y + d), J(static_cast<size_t>(d) * d);
  la::Mat Bp(d, d), Bm(d, d);
  auto metric_at = [&](const double* pt, la::Mat& B) {
    jacobian(pt, J.data());
    la::Mat Jm(d, d, J);
    la::Mat JtJ = la::mat_mul(la::transpose(Jm), Jm);
    B = la::inverse(JtJ);
  };
  std::fill(out, out + d, 0.0);
  for (int j = 0; j < d; ++j) {
    yp[j] = y[j] + step;
    metric_at(yp.data(), Bp);
    yp[j] = y[j] - step;
    metric_at(yp.data(), Bm);
    yp[j] = y[j];
    for (int k = 0; k < d; ++k) out[k] += (Bp(k, j) - Bm(k, j)) / (2 * step);
  }
}

// ---- affine ------------------------------------------------------------------

namespace {

class AffineMap final : public Map {
 public:
  AffineMap(la::Mat A, std::vector<double> offset)
      : Map(MapKind::affine, A.rows), A_(std::move(A)), c_(std::move(offset)) {
    if (A_.rows != A_.cols) throw InvalidParameterError("affine map: matrix must be square");
    if (static_cast<int>(c_.size()) != dim_) throw InvalidParameterError("affine map: offset size mismatch");
    lu_ = A_.a;
    perm_.resize(dim_);
    la::lu_factor(lu_.data(), dim_, perm_.data());
    log_det_ = la::lu_log_abs_det(lu_.data(), dim_);
    lower_ = true;
    for (int i = 0; i < dim_ && lower_; ++i)
      for (int j = i + 1; j < dim_; ++j)
        if (A_(i, j) != 0.0) {
          lower_ = false;
          break;
        }
  }

  void forward(const double* y, double* x) const override {
    la::mat_vec(A_.data(), dim_, dim_, y, x);
    for (int i = 0; i < dim_; ++i) x[i] += c_[i];
  }

  void inverse(const double* x, double* y) const override {
    std::vector<double> b(dim_);
    for (int i = 0; i < dim_; ++i) b[i] = x[i] - c_[i];
    la::lu_solve(lu_.data(), dim_, perm_.data(), b.data(), y);
  }

  void jacobian(const double*, double* J) const override { std::copy(A_.a.begin(), A_.a.end(), J); }
  double log_det_jacobian(const double*) const override { return log_det_; }
  void grad_log_det(const double*, double* g) const override { std::fill(g, g + dim_, 0.0); }
  void component_hessian_vectors(const double*, double* H) const override {
    std::fill(H, H + static_cast<size_t>(dim_) * dim_, 0.0);
  }
  void metric_divergence(const double*, double* out) const override { std::fill(out, out + dim_, 0.0); }
  void inverse_hessian(const double*, double* H) const override {
    std::fill(H, H + static_cast<size_t>(dim_) * dim_ * dim_, 0.0);
  }
  bool lower_triangular() const override { return lower_; }

  ordered_json to_json() const override {
    ordered_json j;
    j["version"] = "1";
    j["kind"] = "affine";
    j["dim"] = dim_;
    ordered_json rows = ordered_json::array();
    for (int i = 0; i < dim_; ++i) {
      ordered_json row = ordered_json::array();
      for (int k = 0; k < dim_; ++k) row.push_back(A_(i, k));
      rows.push_back(row);
    }
    j["matrix"] = rows;
    j["offset"] = c_;
    return j;
  }

  const la::Mat& matrix() const { return A_; }

 private:
  la::Mat A_;
  std::vector<double> c_;
  std::vector<double> lu_;
  std::vector<int> perm_;
  double log_det_;
  bool lower_;
};

// ---- banana (analytic quadratic-bend map) --------------------------------------

class BananaMap final : public Map {
 public:
  BananaMap(double s, double b) : Map(MapKind::banana, 2), s_(s), b_(b) {
    if (!(s > 0)) throw InvalidParameterError("banana map: s must be positive");
  }

  void forward(const double* y, double* x) const override {
    x[0] = y[0] / s_;
    x[1] = y[1] + b_ * y[0] * y[0] - 100.0 * b_;
  }

  void inverse(const double* x, double* y) const override {
    y[0] = s_ * x[0];
    y[1] = x[1] - b_ * y[0] * y[0] + 100.0 * b_;
  }

  void jacobian(const double* y, double* J) const override {
    J[0] = 1.0 / s_;
    J[1] = 0.0;
    J[2] = 2.0 * b_ * y[0];
    J[3] = 1.0;
  }

  double log_det_jacobian(const double*) const override { return -std::log(s_); }
  void grad_log_det(const double*, double* g) const override { g[0] = g[1] = 0.0; }
  void component_hessian_vectors(const double*, double* H) const override { std::fill(H, H + 4, 0.0); }
  void metric_divergence(const double*, double* out) const override {
    out[0] = 0.0;
    out[1] = -2.0 * b_ * s_ * s_;
  }
  void inverse_hessian(const double*, double* H) const override {
    // T = (s x1, x2 - b s^2 x1^2 + 100 b); only d^2 T_2 / dx_1^2 survives
    std::fill(H, H + 8, 0.0);
    H[(1 * 2 + 0) * 2 + 0] = -2.0 * b_ * s_ * s_;
  }
  bool lower_triangular() const override { return true; }

  ordered_json to_json() const override {
    ordered_json j;
    j["version"] = "1";
    j["kind"] = "banana";
    j["dim"] = 2;
    j["s"] = s_;
    j["b"] = b_;
    return j;
  }

 private:
  double s_, b_;
};

// ---- hybrid Rosenbrock analytic map ------------------------------------------
//
// S_1 = sqrt(2a) (y_1 - mu); S_{j,i} = sqrt(2 b_{ji}) (y_{j,i} - y_{j,i-1}^2),
// with y_{j,1} = y_1 shared across blocks. Pushes the hybrid Rosenbrock
// density to a standard normal.

class RosenbrockMap final : public Map {
 public:
  RosenbrockMap(int n1, int n2, double mu, double a, la::Mat b)
      : Map(MapKind::rosenbrock, (n1 - 1) * n2 + 1), n1_(n1), n2_(n2), mu_(mu), a_(a), b_(std::move(b)) {
    if (n1 < 2 || n2 < 1) throw InvalidParameterError("rosenbrock map: need n1 >= 2, n2 >= 1");
    if (!(a > 0)) throw InvalidParameterError("rosenbrock map: a must be positive");
    if (b_.rows != n2 || b_.cols != n1 - 1)
      throw InvalidParameterError("rosenbrock map: b must be n2 x (n1-1)");
    for (double v : b_.a)
      if (!(v > 0)) throw InvalidParameterError("rosenbrock map: all b entries must be positive");
    log_det_ = 0.5 * std::log(2 * a_);
    for (double v : b_.a) log_det_ += 0.5 * std::log(2 * v);
  }

  int idx(int j, int i) const { return 1 + j * (n1_ - 1) + (i - 2); }
  int prev_idx(int j, int i) const { return i == 2 ? 0 : idx(j, i - 1); }

  void forward(const double* y, double* x) const override {
    x[0] = std::sqrt(2 * a_) * (y[0] - mu_);
    for (int j = 0; j < n2_; ++j)
      for (int i = 2; i <= n1_; ++i) {
        double prev = y[prev_idx(j, i)];
        x[idx(j, i)] = std::sqrt(2 * b_(j, i - 2)) * (y[idx(j, i)] - prev * prev);
      }
  }

  void inverse(const double* x, double* y) const override {
    y[0] = mu_ + x[0] / std::sqrt(2 * a_);
    for (int j = 0; j < n2_; ++j)
      for (int i = 2; i <= n1_; ++i) {
        double prev = y[prev_idx(j, i)];
        y[idx(j, i)] = x[idx(j, i)] / std::sqrt(2 * b_(j, i - 2)) + prev * prev;
      }
  }

  void jacobian(const double* y, double* J) const override {
    std::fill(J, J + static_cast<size_t>(dim_) * dim_, 0.0);
    J[0] = std::sqrt(2 * a_);
    for (int j = 0; j < n2_; ++j)
      for (int i = 2; i <= n1_; ++i) {
        int r = idx(j, i), p = prev_idx(j, i);
        double sb = std::sqrt(2 * b_(j, i - 2));
        J[static_cast<size_t>(r) * dim_ + r] = sb;
        J[static_cast<size_t>(r) * dim_ + p] = -2.0 * sb * y[p];
      }
  }

  double log_det_jacobian(const double*) const override { return log_det_; }
  void grad_log_det(const double*, double* g) const override { std::fill(g, g + dim_, 0.0); }
  void component_hessian_vectors(const double*, double* H) const override {
    std::fill(H, H + static_cast<size_t>(dim_) * dim_, 0.0);
  }
  void metric_divergence(const double* y, double* out) const override {
    metric_divergence_via_inverse_hessian(*this, y, out);
  }
  void inverse_hessian(const double* x, double* H) const override {
    // T is the polynomial recursion y_r = x_r / sqrt(2 b) + y_p^2, so gradients
    // and Hessians of each y_r follow by the chain rule from its predecessor.
    int d = dim_;
    size_t dd = static_cast<size_t>(d) * d;
    std::vector<double> y(d);
    inverse(x, y.data());
    std::vector<double> grads(static_cast<size_t>(d) * d, 0.0);
    std::fill(H, H + static_cast<size_t>(d) * dd, 0.0);
    grads[0] = 1.0 / std::sqrt(2 * a_);
    for (int j = 0; j < n2_; ++j)
      for (int i = 2; i <= n1_; ++i) {
        int r = idx(j, i), p = prev_idx(j, i);
        double* gr = &grads[static_cast<size_t>(r) * d];
        const double* gp = &grads[static_cast<size_t>(p) * d];
        for (int t = 0; t < d; ++t) gr[t] = 2.0 * y[p] * gp[t];
        gr[r] += 1.0 / std::sqrt(2 * b_(j, i - 2));
        double* Hr = H + static_cast<size_t>(r) * dd;
        const double* Hp = H + static_cast<size_t>(p) * dd;
        for (int s = 0; s < d; ++s)
          for (int t = 0; t < d; ++t)
            Hr[static_cast<size_t>(s) * d + t] =
                2.0 * gp[s] * gp[t] + 2.0 * y[p] * Hp[static_cast<size_t>(s) * d + t];
      }
  }
  bool lower_triangular() const override { return true; }

  ordered_json to_json() const override {
    ordered_json j;
    j["version"] = "1";
    j["kind"] = "rosenbrock";
    j["dim"] = dim_;
    j["n1"] = n1_;
    j["n2"] = n2_;
    j["mu"] = mu_;
    j["a"] = a_;
    ordered_json rows = ordered_json::array();
    for (int r = 0; r < n2_; ++r) {
      ordered_json row = ordered_json::array();
      for (int c = 0; c < n1_ - 1; ++c) row.push_back(b_(r, c));
      rows.push_back(row);
    }
    j["b"] = rows;
    return j;
  }

 private:
  int n1_, n2_;
  double mu_, a_;
  la::Mat b_;
  double log_det_;
};

}  // namespace

// ---- monotone component evaluation -------------------------------------------

namespace {

// Per-point evaluator for one component. z has the k inputs (prefix + diag).
struct CompCtx {
  const MonotoneComponent& c;
  int k;       // 0-based diagonal coordinate
  int maxord;  // largest Hermite order appearing
  size_t na;
  std::vector<double> prefix;  // per alpha: prod_{j<k} He_{alpha_j}(z_j)
  std::vector<double> hetab;   // (k+1) x (maxord+1) Hermite values at z
  std::vector<double> he;      // scratch for the diagonal variable

  CompCtx(const MonotoneComponent& comp, const double* z) : c(comp), k(comp.index - 1) {
    maxord = 0;
    for (const auto& a : c.multi_indices)
      for (int v : a) maxord = std::max(maxord, v);
    na = c.multi_indices.size();
    hetab.resize(static_cast<size_t>(k + 1) * (maxord + 1));
    for (int j = 0; j <= k; ++j) hermite_all(z[j], maxord, &hetab[static_cast<size_t>(j) * (maxord + 1)]);
    prefix.resize(na);
    for (size_t a = 0; a < na; ++a) {
      double p = 1.0;
      const auto& mi = c.multi_indices[a];
      for (int j = 0; j < k; ++j) p *= hetab[static_cast<size_t>(j) * (maxord + 1) + mi[j]];
      prefix[a] = p;
    }
    he.resize(maxord + 1);
  }

  double he_at(int j, int order) const { return hetab[static_cast<size_t>(j) * (maxord + 1) + order]; }

  // d_k f at diagonal value t
  double dkf(double t) {
    hermite_all(t, maxord, he.data());
    double s = 0;
    for (size_t a = 0; a < na; ++a) {
      int ak = c.multi_indices[a][k];
      if (ak > 0) s += c.coefficients[a] * prefix[a] * ak * he[ak - 1];
    }
    return s;
  }

  // f(prefix, 0)
  double f0() {
    hermite_all(0.0, maxord, he.data());
    double s = 0;
    for (size_t a = 0; a < na; ++a) s += c.coefficients[a] * prefix[a] * he[c.multi_indices[a][k]];
    return s;
  }
};

}  // namespace

ComponentEval monotone_component_eval(const MonotoneComponent& c, const double* z, double z_k,
                                      int quadrature_points) {
  // z carries the prefix in z[0..k-1]; z[k] is ignored in favor of z_k.
  std::vector<double> full(z, z + c.index);
  full[c.index - 1] = z_k;
  CompCtx ctx(c, full.data());
  double val = ctx.f0();
  val += integrate_0_to([&](double t) { return rectifier_eval(c.rectifier, ctx.dkf(t)); }, z_k,
                        quadrature_points);
  double dd = rectifier_eval(c.rectifier, ctx.dkf(z_k));
  return {val, dd};
}

// ---- triangular map ----------------------------------------------------------

namespace {

class TriangularMap final : public Map {
 public:
  TriangularMap(std::vector<MonotoneComponent> comps, int quad, std::vector<double> pre_scale,
                std::vector<double> pre_offset)
      : Map(MapKind::triangular, static_cast<int>(comps.size())),
        comps_(std::move(comps)),
        quad_(quad),
        scale_(std::move(pre_scale)),
        shift_(std::move(pre_offset)) {
    if (quad_ < 8) throw InvalidParameterError("triangular map: quadrature_points must be >= 8");
    for (int k = 0; k < dim_; ++k) {
      const auto& c = comps_[k];
      if (c.index != k + 1) throw InvalidParameterError("triangular map: component index mismatch");
      if (c.multi_indices.size() != c.coefficients.size())
        throw InvalidParameterError("triangular map: coefficient/multi-index count mismatch");
      for (const auto& mi : c.multi_indices)
        if (static_cast<int>(mi.size()) != c.index)
          throw InvalidParameterError("triangular map: multi-index length mismatch");
    }
    if (!scale_.empty()) {
      if (static_cast<int>(scale_.size()) != dim_ || static_cast<int>(shift_.size()) != dim_)
        throw InvalidParameterError("triangular map: pre-map size mismatch");
      for (double sv : scale_)
        if (!(sv > 0)) throw InvalidParameterError("triangular map: pre-map scale must be positive");
    }
  }

  bool has_pre() const { return !scale_.empty(); }

  void pre_apply(const double* y, double* z) const {
    if (has_pre())
      for (int j = 0; j < dim_; ++j) z[j] = scale_[j] * y[j] + shift_[j];
    else
      std::copy(y, y + dim_, z);
  }

  void forward(const double* y, double* x) const override {
    std::vector<double> z(dim_);
    pre_apply(y, z.data());
    for (int k = 0; k < dim_; ++k) x[k] = monotone_component_eval(comps_[k], z.data(), z[k], quad_).value;
  }

  void inverse(const double* x, double* y) const override {
    std::vector<double> z(dim_);
    for (int k = 0; k < dim_; ++k) z[k] = invert_component(k, z.data(), x[k]);
    if (has_pre())
      for (int j = 0; j < dim_; ++j) y[j] = (z[j] - shift_[j]) / scale_[j];
    else
      std::copy(z.begin(), z.end(), y);
  }

  void jacobian(const double* y, double* J) const override {
    std::fill(J, J + static_cast<size_t>(dim_) * dim_, 0.0);
    std::vector<double> z(dim_);
    pre_apply(y, z.data());
    for (int k = 0; k < dim_; ++k) {
      row_derivatives(k, z.data(), J + static_cast<size_t>(k) * dim_);
      if (has_pre())
        for (int j = 0; j <= k; ++j) J[static_cast<size_t>(k) * dim_ + j] *= scale_[j];
    }
  }

  double log_det_jacobian(const double* y) const override {
    std::vector<double> z(dim_);
    pre_apply(y, z.data());
    double s = 0;
    for (int k = 0; k < dim_; ++k) {
      CompCtx ctx(comps_[k], z.data());
      s += std::log(rectifier_eval(comps_[k].rectifier, ctx.dkf(z[k])));
    }
    if (has_pre())
      for (double sv : scale_) s += std::log(sv);
    return s;
  }

  void component_hessian_vectors(const double* y, double* H) const override {
    std::fill(H, H + static_cast<size_t>(dim_) * dim_, 0.0);
    std::vector<double> z(dim_);
    pre_apply(y, z.data());
    for (int k = 0; k < dim_; ++k) {
      CompCtx ctx(comps_[k], z.data());
      double u = ctx.dkf(z[k]);
      double gp = rectifier_deriv(comps_[k].rectifier, u);
      // d^2 S_k / dz_j dz_k = g'(d_k f) * d_j d_k f at t = z_k
      for (int j = 0; j <= k; ++j) {
        double djdk = mixed_second(ctx, j, k, z[k]);
        double v = gp * djdk;
        if (has_pre()) v *= scale_[j] * scale_[k];
        H[static_cast<size_t>(k) * dim_ + j] = v;
      }
    }
  }

  bool lower_triangular() const override { return true; }

  ordered_json to_json() const override {
    ordered_json j;
    j["version"] = "1";
    j["kind"] = "triangular";
    j["dim"] = dim_;
    j["quadrature_points"] = quad_;
    ordered_json comps = ordered_json::array();
    for (const auto& c : comps_) {
      ordered_json cj;
      cj["multi_indices"] = c.multi_indices;
      cj["coefficients"] = c.coefficients;
      cj["rectifier"] = to_string(c.rectifier);
      comps.push_back(cj);
    }
    j["components"] = comps;
    if (has_pre()) {
      ordered_json p;
      p["scale"] = scale_;
      p["offset"] = shift_;
      j["pre_map"] = p;
    }
    return j;
  }

  const std::vector<MonotoneComponent>& components() const { return comps_; }
  int quadrature_points() const { return quad_; }

 private:
  // d_j d_k f at diagonal value t (j <= k), given ctx over z.
  static double mixed_second(CompCtx& ctx, int j, int k, double t) {
    const auto& c = ctx.c;
    hermite_all(t, ctx.maxord, ctx.he.data());
    double s = 0;
    for (size_t a = 0; a < ctx.na; ++a) {
      const auto& mi = c.multi_indices[a];
      int ak = mi[k];
      if (ak == 0) continue;
      double term;
      if (j == k) {
        if (ak < 2) continue;
        term = ctx.prefix[a] * ak * (ak - 1) * ctx.he[ak - 2];
      } else {
        int aj = mi[j];
        if (aj == 0) continue;
        // rebuild the prefix with He' in slot j
        double p = 1.0;
        for (int l = 0; l < k; ++l) {
          if (l == j)
            p *= aj * ctx.he_at(l, aj - 1);
          else
            p *= ctx.he_at(l, mi[l]);
        }
        term = p * ak * ctx.he[ak - 1];
      }
      s += c.coefficients[a] * term;
    }
    return s;
  }

  // One row of the Jacobian in z coordinates.
  void row_derivatives(int k, const double* z, double* row) const {
    const auto& c = comps_[k];
    CompCtx ctx(c, z);
    row[k] = rectifier_eval(c.rectifier, ctx.dkf(z[k]));
    if (k == 0) return;
    // d_j S_k = d_j f(.,0) + int_0^{z_k} g'(d_k f) d_j d_k f dt
    hermite_all(0.0, ctx.maxord, ctx.he.data());
    std::vector<double> he0(ctx.he);
    for (int j = 0; j < k; ++j) {
      double dj0 = 0;
      for (size_t a = 0; a < ctx.na; ++a) {
        const auto& mi = c.multi_indices[a];
        int aj = mi[j];
        if (aj == 0) continue;
        double p = 1.0;
        for (int l = 0; l < k; ++l)
          p *= (l == j) ? aj * ctx.he_at(l, aj - 1) : ctx.he_at(l, mi[l]);
        dj0 += c.coefficients[a] * p * he0[mi[k]];
      }
      row[j] = dj0;
    }
    const GaussLegendre& q = gauss_legendre(quad_);
    double half = 0.5 * z[k];
    for (int qi = 0; qi < quad_; ++qi) {
      double t = half * (q.nodes[qi] + 1.0);
      double u = ctx.dkf(t);
      double gp = rectifier_deriv(c.rectifier, u);
      for (int j = 0; j < k; ++j) row[j] += half * q.weights[qi] * gp * mixed_second(ctx, j, k, t);
    }
  }

  // Solve S_k(z_prefix, t) = target for t by bracketed Newton.
  double invert_component(int k, const double* z, double target) const {
    const auto& c = comps_[k];
    auto eval = [&](double t) { return monotone_component_eval(c, z, t, quad_).value - target; };
    double lo = -1.0, hi = 1.0;
    double flo = eval(lo), fhi = eval(hi);
    int grow = 0;
    while (flo > 0 && grow < 60) {
      lo *= 2;
      flo = eval(lo);
      ++grow;
    }
    grow = 0;
    while (fhi < 0 && grow < 60) {
      hi *= 2;
      fhi = eval(hi);
      ++grow;
    }
    if (flo > 0 || fhi < 0)
      throw InversionError(k, "triangular inversion: no bracket for component " + std::to_string(k));
    double tol = 1e-12 * std::max(1.0, std::fabs(target));
    double t = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      ComponentEval ce = monotone_component_eval(c, z, t, quad_);
      double r = ce.value - target;
      if (std::fabs(r) <= tol) return t;
      if (r > 0)
        hi = t;
      else
        lo = t;
      double step = r / ce.ddiag;
      double tn = t - step;
      if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi);  // bisection safeguard
      if (tn == t) return t;                            // interval exhausted at double precision
      t = tn;
    }
    ComponentEval ce = monotone_component_eval(c, z, t, quad_);
    if (std::fabs(ce.value - target) <= 1e-8 * std::max(1.0, std::fabs(target))) return t;
    throw InversionError(k, "triangular inversion: no convergence for component " + std::to_string(k));
  }

  std::vector<MonotoneComponent> comps_;
  int quad_;
  std::vector<double> scale_, shift_;
};

// ---- composition -------------------------------------------------------------

class ComposedMap final : public Map {
 public:
  ComposedMap(MapPtr outer, MapPtr inner)
      : Map(MapKind::composed, inner->dim()), outer_(std::move(outer)), inner_(std::move(inner)) {
    if (outer_->dim() != inner_->dim()) throw InvalidParameterError("compose: dimension mismatch");
  }

  void forward(const double* y, double* x) const override {
    std::vector<double> mid(dim_);
    inner_->forward(y, mid.data());
    outer_->forward(mid.data(), x);
  }

  void inverse(const double* x, double* y) const override {
    std::vector<double> mid(dim_);
    outer_->inverse(x, mid.data());
    inner_->inverse(mid.data(), y);
  }

  void jacobian(const double* y, double* J) const override {
    std::vector<double> mid(dim_);
    inner_->forward(y, mid.data());
    la::Mat Jo(dim_, dim_), Ji(dim_, dim_);
    outer_->jacobian(mid.data(), Jo.data());
    inner_->jacobian(y, Ji.data());
    la::Mat prod = la::mat_mul(Jo, Ji);
    std::copy(prod.a.begin(), prod.a.end(), J);
  }

  double log_det_jacobian(const double* y) const override {
    std::vector<double> mid(dim_);
    inner_->forward(y, mid.data());
    return outer_->log_det_jacobian(mid.data()) + inner_->log_det_jacobian(y);
  }

  void grad_log_det(const double* y, double* g) const override {
    std::vector<double> mid(dim_), go(dim_), gi(dim_);
    inner_->forward(y, mid.data());
    outer_->grad_log_det(mid.data(), go.data());
    inner_->grad_log_det(y, gi.data());
    la::Mat Ji(dim_, dim_);
    inner_->jacobian(y, Ji.data());
    la::mat_tvec(Ji.data(), dim_, dim_, go.data(), g);
    for (int i = 0; i < dim_; ++i) g[i] += gi[i];
  }

  bool lower_triangular() const override { return outer_->lower_triangular() && inner_->lower_triangular(); }

  ordered_json to_json() const override {
    ordered_json j;
    j["version"] = "1";
    j["kind"] = "composed";
    j["dim"] = dim_;
    ordered_json maps = ordered_json::array();
    maps.push_back(inner_->to_json());  // application order: inner first
    maps.push_back(outer_->to_json());
    j["maps"] = maps;
    return j;
  }

 private:
  MapPtr outer_, inner_;
};

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw SchemaError("unknown key \"" + it.key() + "\" in " + where);
  }
}

}  // namespace

// ---- factories ----------------------------------------------------------------

MapPtr make_affine(la::Mat A, std::vector<double> offset) {
  return std::make_shared<AffineMap>(std::move(A), std::move(offset));
}

MapPtr make_affine_diag(std::vector<double> scale, std::vector<double> offset) {
  int d = static_cast<int>(scale.size());
  la::Mat A(d, d);
  for (int i = 0; i < d; ++i) A(i, i) = scale[i];
  return make_affine(std::move(A), std::move(offset));
}

MapPtr make_identity(int dim) {
  return make_affine(la::Mat::identity(dim), std::vector<double>(dim, 0.0));
}

MapPtr banana_map(double s, double b) { return std::make_shared<BananaMap>(s, b); }

MapPtr rosenbrock_map(int n1, int n2, double mu, double a, la::Mat b) {
  return std::make_shared<RosenbrockMap>(n1, n2, mu, a, std::move(b));
}

MapPtr make_triangular(std::vector<MonotoneComponent> components, int quadrature_points,
                       std::vector<double> pre_scale, std::vector<double> pre_offset) {
  return std::make_shared<TriangularMap>(std::move(components), quadrature_points, std::move(pre_scale),
                                         std::move(pre_offset));
}

MapPtr compose(MapPtr outer, MapPtr inner) {
  return std::make_shared<ComposedMap>(std::move(outer), std::move(inner));
}

// ---- serialization -------------------------------------------------------------

MapPtr map_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("map json: expected an object");
  if (!j.contains("version")) throw SchemaError("map json: missing version");
  if (!(j["version"].is_string() && j["version"] == "1"))
    throw SchemaError("map json: unsupported schema version");
  if (!j.contains("kind") || !j["kind"].is_string()) throw SchemaError("map json: missing kind");
  std::string kind = j["kind"];
  if (kind == "affine") {
    check_keys(j, {"version", "kind", "dim", "matrix", "offset"}, "affine map");
    int d = j.at("dim");
    la::Mat A(d, d);
    auto rows = j.at("matrix");
    if (static_cast<int>(rows.size()) != d) throw SchemaError("affine map: matrix shape");
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) A(i, k) = rows[i][k];
    std::vector<double> c = j.at("offset").get<std::vector<double>>();
    return make_affine(std::move(A), std::move(c));
  }
  if (kind == "banana") {
    check_keys(j, {"version", "kind", "dim", "s", "b"}, "banana map");
    return banana_map(j.at("s"), j.at("b"));
  }
  if (kind == "rosenbrock") {
    check_keys(j, {"version", "kind", "dim", "n1", "n2", "mu", "a", "b"}, "rosenbrock map");
    int n1 = j.at("n1"), n2 = j.at("n2");
    la::Mat b(n2, n1 - 1);
    auto rows = j.at("b");
    if (static_cast<int>(rows.size()) != n2) throw SchemaError("rosenbrock map: b shape");
    for (int r = 0; r < n2; ++r)
      for (int c = 0; c < n1 - 1; ++c) b(r, c) = rows[r][c];
    return rosenbrock_map(n1, n2, j.at("mu"), j.at("a"), std::move(b));
  }
  if (kind == "triangular") {
    check_keys(j, {"version", "kind", "dim", "quadrature_points", "components", "pre_map"},
               "triangular map");
    int d = j.at("dim");
    int quad = j.value("quadrature_points", 32);
    std::vector<MonotoneComponent> comps;
    auto cj = j.at("components");
    if (static_cast<int>(cj.size()) != d) throw SchemaError("triangular map: component count mismatch");
    for (int k = 0; k < d; ++k) {
      check_keys(cj[k], {"multi_indices", "coefficients", "rectifier"}, "triangular component");
      MonotoneComponent c;
      c.index = k + 1;
      c.multi_indices = cj[k].at("multi_indices").get<std::vector<std::vector<int>>>();
      c.coefficients = cj[k].at("coefficients").get<std::vector<double>>();
      c.rectifier = rectifier_from_string(cj[k].at("rectifier"));
      comps.push_back(std::move(c));
    }
    std::vector<double> scale, offset;
    if (j.contains("pre_map")) {
      check_keys(j["pre_map"], {"scale", "offset"}, "triangular pre_map");
      scale = j["pre_map"].at("scale").get<std::vector<double>>();
      offset = j["pre_map"].at("offset").get<std::vector<double>>();
    }
    return make_triangular(std::move(comps), quad, std::move(scale), std::move(offset));
  }
  if (kind == "composed") {
    check_keys(j, {"version", "kind", "dim", "maps"}, "composed map");
    auto maps = j.at("maps");
    if (maps.size() < 2) throw SchemaError("composed map: need at least two maps");
    MapPtr m = map_from_json(maps[0]);
    for (size_t i = 1; i < maps.size(); ++i) m = compose(map_from_json(maps[i]), m);
    return m;
  }
  throw SchemaError("map json: unknown kind \"" + kind + "\"");
}

void save_map(const Map& map, const std::string& path) { io::write_json(path, map.to_json()); }

MapPtr load_map(const std::string& path) { return map_from_json(io::read_json(path)); }

void metric_divergence_via_inverse_hessian(const Map& map, const double* y, double* out) {
  int d = map.dim();
  size_t dd = static_cast<size_t>(d) * d;
  std::vector<double> x(d), J(dd), H(dd * d);
  map.forward(y, x.data());
  map.jacobian(y, J.data());
  la::Mat Jm(d, d, J);
  la::Mat JT = la::inverse(Jm);
  map.inverse_hessian(x.data(), H.data());
  // w_m = sum_{j,l} H_j(m,l) (J_S)_{lj}
  std::vector<double> w(d, 0.0);
  for (int m = 0; m < d; ++m)
    for (int j = 0; j < d; ++j)
      for (int l = 0; l < d; ++l)
        w[m] += H[(static_cast<size_t>(j) * d + m) * d + l] * J[static_cast<size_t>(l) * d + j];
  for (int k = 0; k < d; ++k) {
    double ck = 0;
    for (int i = 0; i < d; ++i) ck += H[(static_cast<size_t>(k) * d + i) * d + i];
    double jt_w = 0;
    for (int i = 0; i < d; ++i) jt_w += JT(k, i) * w[i];
    out[k] = ck + jt_w;
  }
}

// ---- pushforward ----------------------------------------------------------------

double pushforward_log_density(const Target& target, const Map& map, const double* x) {
  std::vector<double> y(map.dim());
  map.inverse(x, y.data());
  return target.log_density(y.data()) - map.log_det_jacobian(y.data());
}

void pushforward_grad_log_density(const Target& target, const Map& map, const double* x, double* out,
                                  const double* y_hint) {
  int d = map.dim();
  thread_local std::vector<double> scratch;
  size_t need = 3 * static_cast<size_t>(d) + static_cast<size_t>(d) * d;
  if (scratch.size() < need) scratch.resize(need);
  double* ybuf = scratch.data();
  double* v = ybuf + d;
  double* gld = v + d;
  double* J = gld + d;
  const double* y = y_hint;
  if (!y) {
    map.inverse(x, ybuf);
    y = ybuf;
  }
  target.grad_log_density(y, v);
  map.grad_log_det(y, gld);
  for (int i = 0; i < d; ++i) v[i] -= gld[i];
  map.jacobian(y, J);
  if (map.lower_triangular()) {
    la::solve_lower_transposed(J, d, v, out);
  } else {
    la::Mat Jt(d, d);
    for (int i = 0; i < d; ++i)
      for (int jcol = 0; jcol < d; ++jcol) Jt(i, jcol) = J[static_cast<size_t>(jcol) * d + i];
    la::solve(Jt.data(), d, v, out);
  }
}

std::vector<double> pushforward_grad_log_density(const Target& target, const Map& map,
                                                 const std::vector<double>& x) {
  std::vector<double> g(map.dim());
  pushforward_grad_log_density(target, map, x.data(), g.data());
  return g;
}

}  // namespace tmld
