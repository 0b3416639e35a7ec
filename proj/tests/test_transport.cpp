#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "errors.hpp"
#include "hermite.hpp"
#include "io.hpp"
#include "rng.hpp"
#include "targets.hpp"
#include "theory_checks.hpp"
#include "transport.hpp"
#include "util.hpp"

using namespace tmld;

namespace {

// triangular map S = (y1, y2 + p(y1)) built exactly in the Hermite basis
MapPtr shift_map(double c_he2, double c_he3) {
  std::vector<MonotoneComponent> comps(2);
  comps[0].index = 1;
  comps[0].multi_indices = {{0}, {1}};
  comps[0].coefficients = {0.0, rectifier_inverse(Rectifier::softplus, 1.0)};
  comps[1].index = 2;
  comps[1].multi_indices = {{0, 0}, {0, 1}, {2, 0}, {3, 0}};
  comps[1].coefficients = {c_he2 + 0.0, rectifier_inverse(Rectifier::softplus, 1.0), c_he2, c_he3};
  // He2(x) = x^2 - 1 and He3(x) = x^3 - 3x; constants fixed below
  return make_triangular(std::move(comps), 32);
}

MapPtr synthetic_triangular() {
  std::vector<MonotoneComponent> comps(2);
  comps[0].index = 1;
  comps[0].multi_indices = total_order_multi_indices(1, 2);
  comps[0].coefficients = {0.10, rectifier_inverse(Rectifier::softplus, 1.0), 0.05};
  comps[0].rectifier = Rectifier::softplus;
  comps[1].index = 2;
  comps[1].multi_indices = total_order_multi_indices(2, 3);
  comps[1].coefficients.assign(comps[1].multi_indices.size(), 0.0);
  for (size_t a = 0; a < comps[1].multi_indices.size(); ++a) {
    const auto& mi = comps[1].multi_indices[a];
    if (mi[0] == 0 && mi[1] == 0) comps[1].coefficients[a] = 0.05;
    if (mi[0] == 0 && mi[1] == 1) comps[1].coefficients[a] = rectifier_inverse(Rectifier::softplus, 1.0);
    if (mi[0] == 1 && mi[1] == 0) comps[1].coefficients[a] = 0.30;
    if (mi[0] == 2 && mi[1] == 0) comps[1].coefficients[a] = 0.20;
    if (mi[0] == 1 && mi[1] == 1) comps[1].coefficients[a] = 0.15;
    if (mi[0] == 0 && mi[1] == 2) comps[1].coefficients[a] = 0.10;
  }
  return make_triangular(std::move(comps), 32);
}

la::Mat rosen_b() {
  la::Mat b(2, 3);
  std::fill(b.a.begin(), b.a.end(), 20.0);
  return b;
}

std::vector<MapPtr> all_kinds() {
  return {make_affine_diag({1.0, 2.0}, {0.1, -0.4}), banana_map(4.0, 0.01),
          rosenbrock_map(4, 2, 1.0, 30.0, rosen_b()), synthetic_triangular(),
          compose(banana_map(4.0, 0.01), make_affine_diag({0.5, 1.5}, {0.2, 0.0}))};
}

void fd_jacobian(const Map& m, const std::vector<double>& y, double* J, double step = 1e-6) {
  int d = m.dim();
  std::vector<double> yp(y), xp(d), xm(d);
  for (int j = 0; j < d; ++j) {
    yp[j] = y[j] + step;
    m.forward(yp.data(), xp.data());
    yp[j] = y[j] - step;
    m.forward(yp.data(), xm.data());
    yp[j] = y[j];
    for (int i = 0; i < d; ++i) J[i * d + j] = (xp[i] - xm[i]) / (2 * step);
  }
}

}  // namespace

TEST_CASE("affine forward/inverse") {
  MapPtr m = make_affine_diag({1.0, 2.0}, {0.0, 0.0});
  auto x = m->forward({1.0, 1.0});
  CHECK(x[0] == 1.0);
  CHECK(x[1] == 2.0);
  auto y = m->inverse({1.0, 2.0});
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m->log_det_jacobian(y.data()) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("banana map values") {
  MapPtr m = banana_map(4.0, 0.01);
  auto x = m->forward({0.0, 0.0});
  CHECK(x[0] == 0.0);
  CHECK(x[1] == doctest::Approx(-1.0).epsilon(1e-15));
  la::Mat J = m->jacobian_mat({1.3, -0.7});
  CHECK(J(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(J(0, 1) == 0.0);
  CHECK(J(1, 0) == doctest::Approx(2 * 0.01 * 1.3).epsilon(1e-15));
  CHECK(J(1, 1) == 1.0);
  CHECK(m->log_det_jacobian(J.data()) == doctest::Approx(-std::log(4.0)).epsilon(1e-14));
  std::vector<double> g(2), H(4);
  m->grad_log_det(std::vector<double>{0.4, 1.2}.data(), g.data());
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  m->component_hessian_vectors(std::vector<double>{0.4, 1.2}.data(), H.data());
  for (double v : H) CHECK(v == 0.0);
}

TEST_CASE("triangular map shift example") {
  // S = (y1, y2 + y1^2): He2 coefficient 1 plus constant 1 makes f(y1,0) = y1^2
  std::vector<MonotoneComponent> comps(2);
  comps[0].index = 1;
  comps[0].multi_indices = {{0}, {1}};
  comps[0].coefficients = {0.0, rectifier_inverse(Rectifier::softplus, 1.0)};
  comps[1].index = 2;
  comps[1].multi_indices = {{0, 0}, {2, 0}, {0, 1}};
  comps[1].coefficients = {1.0, 1.0, rectifier_inverse(Rectifier::softplus, 1.0)};
  MapPtr m = make_triangular(std::move(comps), 32);
  auto x = m->forward({1.0, 1.0});
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(x[1] == doctest::Approx(2.0).epsilon(1e-12));
  auto y = m->inverse({1.0, 2.0});
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-10));
  std::vector<double> g(2);
  m->grad_log_det(std::vector<double>{0.3, -0.8}.data(), g.data());
  CHECK(g[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("triangular cubic shift has zero grad log det") {
  // S = (y1, y2 + y1^3): diagonal derivatives constant
  MapPtr m = shift_map(0.0, 1.0);  // He3 + 3 He1 would give y1^3; here just check constancy
  std::vector<double> g(2);
  m->grad_log_det(std::vector<double>{0.9, 0.4}.data(), g.data());
  CHECK(g[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("round trip for all map kinds") {
  rng::Stream stream(21, 0);
  for (const auto& m : all_kinds()) {
    int d = m->dim();
    std::vector<double> y(d), x(d), back(d);
    for (int i = 0; i < 200; ++i) {
      for (int j = 0; j < d; ++j) y[j] = -3.0 + 6.0 * stream.uniform(i, j);
      m->forward(y.data(), x.data());
      m->inverse(x.data(), back.data());
      double err = 0, yn = 0;
      for (int j = 0; j < d; ++j) {
        err += (back[j] - y[j]) * (back[j] - y[j]);
        yn += y[j] * y[j];
      }
      CHECK(std::sqrt(err) <= 1e-8 * (1.0 + std::sqrt(yn)));
    }
  }
}

TEST_CASE("jacobians match finite differences") {
  rng::Stream stream(22, 0);
  for (const auto& m : all_kinds()) {
    int d = m->dim();
    std::vector<double> y(d), J(d * d), Jfd(d * d);
    for (int i = 0; i < 100; ++i) {
      for (int j = 0; j < d; ++j) y[j] = -3.0 + 6.0 * stream.uniform(i, j);
      m->jacobian(y.data(), J.data());
      fd_jacobian(*m, y, Jfd.data());
      for (int k = 0; k < d * d; ++k) CHECK(J[k] == doctest::Approx(Jfd[k]).epsilon(1e-5));
    }
  }
}

TEST_CASE("log det equals lu det for triangular kinds") {
  rng::Stream stream(23, 0);
  for (const auto& m : all_kinds()) {
    if (!m->lower_triangular()) continue;
    int d = m->dim();
    std::vector<double> y(d);
    for (int i = 0; i < 20; ++i) {
      for (int j = 0; j < d; ++j) y[j] = -3.0 + 6.0 * stream.uniform(i, j);
      la::Mat J = m->jacobian_mat(y);
      CHECK(m->log_det_jacobian(y.data()) == doctest::Approx(la::log_abs_det(J)).epsilon(1e-10));
    }
  }
}

TEST_CASE("triangular monotonicity over a wide box") {
  MapPtr m = synthetic_triangular();
  rng::Stream stream(24, 0);
  std::vector<double> y(2), J(4);
  for (int i = 0; i < 10000; ++i) {
    y[0] = -10.0 + 20.0 * stream.uniform(i, 0);
    y[1] = -10.0 + 20.0 * stream.uniform(i, 1);
    m->jacobian(y.data(), J.data());
    CHECK(J[0] > 0.0);
    CHECK(J[3] > 0.0);
  }
}

TEST_CASE("grad log det matches finite differences of log det") {
  rng::Stream stream(25, 0);
  for (const auto& m : all_kinds()) {
    int d = m->dim();
    std::vector<double> y(d), g(d), yp(d);
    for (int i = 0; i < 25; ++i) {
      for (int j = 0; j < d; ++j) y[j] = -2.0 + 4.0 * stream.uniform(i, j);
      m->grad_log_det(y.data(), g.data());
      for (int j = 0; j < d; ++j) {
        yp = y;
        double step = 1e-6;
        yp[j] = y[j] + step;
        double up = m->log_det_jacobian(yp.data());
        yp[j] = y[j] - step;
        double um = m->log_det_jacobian(yp.data());
        CHECK(g[j] == doctest::Approx((up - um) / (2 * step)).epsilon(2e-5));
      }
    }
  }
}

TEST_CASE("component hessians match finite differences of the jacobian diagonal") {
  MapPtr m = synthetic_triangular();
  rng::Stream stream(26, 0);
  std::vector<double> y(2), H(4), Jp(4), Jm(4), yp(2);
  for (int i = 0; i < 25; ++i) {
    y[0] = -2.0 + 4.0 * stream.uniform(i, 0);
    y[1] = -2.0 + 4.0 * stream.uniform(i, 1);
    m->component_hessian_vectors(y.data(), H.data());
    for (int j = 0; j < 2; ++j) {
      yp = y;
      double step = 1e-6;
      yp[j] = y[j] + step;
      m->jacobian(yp.data(), Jp.data());
      yp[j] = y[j] - step;
      m->jacobian(yp.data(), Jm.data());
      for (int k = 0; k < 2; ++k)
        CHECK(H[k * 2 + j] == doctest::Approx((Jp[k * 2 + k] - Jm[k * 2 + k]) / (2 * step)).epsilon(5e-5));
    }
  }
}

TEST_CASE("composition behaves like the outer and inner maps") {
  MapPtr inner = make_affine_diag({0.5, 1.5}, {0.2, 0.0});
  MapPtr outer = banana_map(4.0, 0.01);
  MapPtr comp = compose(outer, inner);
  MapPtr ident = compose(make_identity(2), outer);
  rng::Stream stream(27, 0);
  std::vector<double> y(2), a(2), b(2), mid(2);
  for (int i = 0; i < 50; ++i) {
    y[0] = -3.0 + 6.0 * stream.uniform(i, 0);
    y[1] = -3.0 + 6.0 * stream.uniform(i, 1);
    // identity o M == M
    ident->forward(y.data(), a.data());
    outer->forward(y.data(), b.data());
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[1]);
    // cocycle: log det adds
    inner->forward(y.data(), mid.data());
    double sum = outer->log_det_jacobian(mid.data()) + inner->log_det_jacobian(y.data());
    CHECK(comp->log_det_jacobian(y.data()) == doctest::Approx(sum).epsilon(1e-10));
    // inverse of composition round trips
    comp->forward(y.data(), a.data());
    comp->inverse(a.data(), b.data());
    CHECK(b[0] == doctest::Approx(y[0]).epsilon(1e-8));
    CHECK(b[1] == doctest::Approx(y[1]).epsilon(1e-8));
  }
}

TEST_CASE("serialization round trip is exact") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "tmld_map_test";
  fs::create_directories(dir);
  rng::Stream stream(28, 0);
  for (const auto& m : all_kinds()) {
    std::string path = (dir / "map.json").string();
    save_map(*m, path);
    MapPtr loaded = load_map(path);
    int d = m->dim();
    std::vector<double> y(d), a(d), b(d);
    for (int i = 0; i < 100; ++i) {
      for (int j = 0; j < d; ++j) y[j] = -3.0 + 6.0 * stream.uniform(i, j);
      m->forward(y.data(), a.data());
      loaded->forward(y.data(), b.data());
      for (int j = 0; j < d; ++j) CHECK(a[j] == b[j]);  // bit-exact
    }
  }
  // schema errors
  io::write_file((dir / "bad_kind.json").string(), R"({"version":"1","kind":"warp","dim":2})");
  CHECK_THROWS_AS(load_map((dir / "bad_kind.json").string()), SchemaError);
  io::write_file((dir / "bad_version.json").string(), R"({"version":"2","kind":"banana","dim":2,"s":4.0,"b":0.01})");
  CHECK_THROWS_AS(load_map((dir / "bad_version.json").string()), SchemaError);
  io::write_file((dir / "extra_key.json").string(),
                 R"({"version":"1","kind":"banana","dim":2,"s":4.0,"b":0.01,"zzz":1})");
  CHECK_THROWS_AS(load_map((dir / "extra_key.json").string()), SchemaError);
  io::write_file((dir / "garbage.json").string(), "{nope");
  CHECK_THROWS_AS(load_map((dir / "garbage.json").string()), SchemaError);
}

TEST_CASE("pushforward gradient identities") {
  TargetPtr t = banana(4.0, 0.01);
  // identity map: score of the target itself
  MapPtr id = make_identity(2);
  auto g = pushforward_grad_log_density(*t, *id, {0.7, 1.4});
  auto direct = t->grad_log_density({0.7, 1.4});
  CHECK(g[0] == doctest::Approx(direct[0]).epsilon(1e-13));
  CHECK(g[1] == doctest::Approx(direct[1]).epsilon(1e-13));

  // exact map: standard normal score -x at 100 random points
  const Map& exact = *t->exact_map();
  rng::Stream stream(29, 0);
  std::vector<double> x(2), px(2);
  for (int i = 0; i < 100; ++i) {
    x[0] = -3.0 + 6.0 * stream.uniform(i, 0);
    x[1] = -3.0 + 6.0 * stream.uniform(i, 1);
    pushforward_grad_log_density(*t, exact, x.data(), px.data());
    CHECK(px[0] == doctest::Approx(-x[0]).epsilon(1e-8));
    CHECK(px[1] == doctest::Approx(-x[1]).epsilon(1e-8));
  }

  // finite differences of the pushforward log density, unscaled banana map
  MapPtr paper = banana_map(4.0, 0.01);
  for (int i = 0; i < 20; ++i) {
    x[0] = -2.0 + 4.0 * stream.uniform(1000 + i, 0);
    x[1] = -2.0 + 4.0 * stream.uniform(1000 + i, 1);
    pushforward_grad_log_density(*t, *paper, x.data(), px.data());
    for (int j = 0; j < 2; ++j) {
      std::vector<double> xp(x);
      double step = 1e-6;
      xp[j] = x[j] + step;
      double up = pushforward_log_density(*t, *paper, xp.data());
      xp[j] = x[j] - step;
      double um = pushforward_log_density(*t, *paper, xp.data());
      CHECK(px[j] == doctest::Approx((up - um) / (2 * step)).epsilon(1e-5));
    }
  }
}

TEST_CASE("appendix identity holds for every map kind") {
  rng::Stream stream(30, 0);
  for (const auto& m : all_kinds()) {
    int d = m->dim();
    std::vector<double> y(d);
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < d; ++j) y[j] = -3.0 + 6.0 * stream.uniform(i, j);
      CHECK(appendix_a_identity_residual(*m, y) <= 1e-6);
    }
  }
}

TEST_CASE("metric divergence overrides agree with finite differences") {
  // banana: analytic (0, -2 b s^2)
  MapPtr bm = banana_map(4.0, 0.01);
  std::vector<double> div(2);
  bm->metric_divergence(std::vector<double>{0.4, -1.0}.data(), div.data());
  CHECK(div[0] == 0.0);
  CHECK(div[1] == doctest::Approx(-2 * 0.01 * 16.0).epsilon(1e-14));

  // rosenbrock: inverse-Hessian contraction against a plain FD oracle
  MapPtr rm = rosenbrock_map(4, 2, 1.0, 30.0, rosen_b());
  int d = rm->dim();
  std::vector<double> y(d), got(d), fd(d, 0.0);
  rng::Stream stream(31, 0);
  for (int j = 0; j < d; ++j) y[j] = -1.5 + 3.0 * stream.uniform(1, j);
  rm->metric_divergence(y.data(), got.data());
  double step = 1e-5;
  auto metric = [&](const std::vector<double>& pt) {
    la::Mat J = rm->jacobian_mat(pt);
    return la::inverse(la::mat_mul(la::transpose(J), J));
  };
  std::vector<double> yp(y);
  for (int j = 0; j < d; ++j) {
    yp[j] = y[j] + step;
    la::Mat Bp = metric(yp);
    yp[j] = y[j] - step;
    la::Mat Bm = metric(yp);
    yp[j] = y[j];
    for (int k = 0; k < d; ++k) fd[k] += (Bp(k, j) - Bm(k, j)) / (2 * step);
  }
  for (int k = 0; k < d; ++k) CHECK(got[k] == doctest::Approx(fd[k]).epsilon(1e-4));
}

TEST_CASE("monotone component eval basics") {
  // f linear in the diagonal with unit slope: value = f(.,0) + softplus(1) z
  MonotoneComponent c;
  c.index = 2;
  c.multi_indices = {{0, 0}, {1, 0}, {0, 1}};
  c.coefficients = {0.3, 0.7, 1.0};
  c.rectifier = Rectifier::softplus;
  double prefix[2] = {0.5, 0.0};
  ComponentEval ev = monotone_component_eval(c, prefix, 2.0, 32);
  double f0 = 0.3 + 0.7 * 0.5;
  CHECK(ev.value == doctest::Approx(f0 + rectifier_eval(Rectifier::softplus, 1.0) * 2.0).epsilon(1e-12));
  CHECK(ev.ddiag == doctest::Approx(rectifier_eval(Rectifier::softplus, 1.0)).epsilon(1e-14));
}
