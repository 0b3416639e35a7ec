#include <doctest.h>

#include <cmath>

#include "errors.hpp"
#include "rng.hpp"
#include "targets.hpp"
#include "transport.hpp"
#include "util.hpp"

using namespace tmld;

namespace {

// central-difference gradient oracle
std::vector<double> fd_gradient(const Target& t, const std::vector<double>& y, double step = 1e-6) {
  std::vector<double> g(t.dim()), yp(y);
  for (int j = 0; j < t.dim(); ++j) {
    yp[j] = y[j] + step;
    double up = t.log_density(yp.data());
    yp[j] = y[j] - step;
    double um = t.log_density(yp.data());
    yp[j] = y[j];
    g[j] = (up - um) / (2 * step);
  }
  return g;
}

void check_gradient(const Target& t, uint64_t seed, int n_points, double box) {
  rng::Stream stream(seed, 0);
  std::vector<double> y(t.dim()), g(t.dim());
  for (int i = 0; i < n_points; ++i) {
    for (int j = 0; j < t.dim(); ++j) y[j] = -box + 2 * box * stream.uniform(i, j);
    t.grad_log_density(y.data(), g.data());
    std::vector<double> fd = fd_gradient(t, y);
    double err = 0, gn = 0;
    for (int j = 0; j < t.dim(); ++j) {
      err += (g[j] - fd[j]) * (g[j] - fd[j]);
      gn += g[j] * g[j];
    }
    CHECK(std::sqrt(err) <= 1e-5 * (1.0 + std::sqrt(gn)));
  }
}

// pushforward through the exact map should be standard normal up to a constant
void check_exact_map_pushforward(const Target& t) {
  REQUIRE(t.exact_map() != nullptr);
  const Map& S = *t.exact_map();
  rng::Stream stream(7, 1);
  RunningStats diff;
  std::vector<double> x(t.dim()), y(t.dim());
  for (int i = 0; i < 200; ++i) {
    stream.normals(i, x.data(), t.dim());
    S.inverse(x.data(), y.data());
    double log_push = t.log_density(y.data()) - S.log_det_jacobian(y.data());
    double log_std = -0.5 * la::dot(x.data(), x.data(), t.dim());
    diff.add(log_push - log_std);
  }
  CHECK(std::sqrt(diff.variance()) <= 1e-8);
}

}  // namespace

TEST_CASE("banana density values") {
  TargetPtr t = banana(4.0, 0.01);
  CHECK(t->dim() == 2);
  CHECK(t->log_density({0.0, 1.0}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(t->log_density({4.0, 1.0}) == doctest::Approx(-1.0256).epsilon(1e-12));
  auto g = t->grad_log_density({0.0, 1.0});
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK_THROWS_AS(banana(-1.0, 0.01), InvalidParameterError);
}

TEST_CASE("banana exact map pushforward and reference moments") {
  TargetPtr t = banana(4.0, 0.01);
  check_exact_map_pushforward(*t);
  // E[y1^2 + y1 + y2^2 + y2] for s=4, b=0.01 via independent moment algebra:
  // y1 ~ N(0, 8), z = y2 + b y1^2 - 100 b ~ N(0, 1/2) independent.
  double Ey1sq = 8.0;
  double Ey2 = -0.01 * Ey1sq + 1.0;
  double Ey2sq = 0.5 + 0.0001 * (3 * 64.0) - 2 * 0.01 * 100 * 0.01 * Ey1sq + 1.0;
  double truth = Ey1sq + Ey2sq + Ey2;
  double got = t->reference_expectation(
      [](const double* y) { return y[0] * y[0] + y[0] + y[1] * y[1] + y[1]; }, 0, 0);
  CHECK(got == doctest::Approx(truth).epsilon(1e-10));
}

TEST_CASE("banana gradient matches finite differences") { check_gradient(*banana(4.0, 0.01), 11, 100, 6.0); }

TEST_CASE("funnel density and gradient") {
  TargetPtr t = funnel_posterior({0.0});
  CHECK(t->log_density({0.0, 0.0}) == doctest::Approx(-0.5).epsilon(1e-15));
  check_gradient(*t, 12, 50, 2.0);

  // grad at (0.3, -0.5) against finite differences, tol 1e-5
  auto g = t->grad_log_density({0.3, -0.5});
  auto fd = fd_gradient(*t, {0.3, -0.5});
  CHECK(g[0] == doctest::Approx(fd[0]).epsilon(1e-5));
  CHECK(g[1] == doctest::Approx(fd[1]).epsilon(1e-5));

  // at mu = mean(X), the likelihood term drops out of d/dmu
  std::vector<double> data = {0.4, -0.2, 1.1, 0.7};
  TargetPtr t2 = funnel_posterior(data);
  double mean = (0.4 - 0.2 + 1.1 + 0.7) / 4.0;
  auto g2 = t2->grad_log_density({mean, 0.0});
  CHECK(g2[0] == doctest::Approx(-mean / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(funnel_posterior({}), InvalidParameterError);
}

TEST_CASE("funnel exact sampler agrees with quadrature expectation") {
  TargetPtr t = funnel_posterior({0.1, -0.3, 0.25, 0.05, -0.15, 0.3, 0.0, -0.2});
  auto phi = [](const double* y) { return std::exp(y[1]); };
  double truth = t->reference_expectation(phi, 0, 0);
  size_t n = 200000;
  std::vector<double> samples(n * 2);
  t->sample_exact(5, n, samples.data());
  RunningStats st;
  for (size_t i = 0; i < n; ++i) st.add(std::exp(samples[2 * i + 1]));
  double se = std::sqrt(st.variance() / n);
  CHECK(std::fabs(st.mean - truth) <= 5 * se + 1e-6);
}

TEST_CASE("hybrid rosenbrock dimension, mode, exact map") {
  la::Mat b(2, 3);
  std::fill(b.a.begin(), b.a.end(), 20.0);
  TargetPtr t = hybrid_rosenbrock(4, 2, 1.0, 30.0, b);
  CHECK(t->dim() == 7);
  // mode: y1 = mu and each y_{j,i} = y_{j,i-1}^2
  std::vector<double> y(7);
  y[0] = 1.0;
  for (int j = 0; j < 2; ++j)
    for (int i = 2; i <= 4; ++i) {
      int idx = 1 + j * 3 + (i - 2);
      double prev = i == 2 ? y[0] : y[idx - 1];
      y[idx] = prev * prev;
    }
  CHECK(t->log_density(y.data()) == doctest::Approx(0.0).epsilon(1e-15));
  check_exact_map_pushforward(*t);
  check_gradient(*t, 13, 50, 3.0);
  la::Mat bad(1, 1);
  bad(0, 0) = 1.0;
  CHECK_THROWS_AS(hybrid_rosenbrock(4, 2, 1.0, 30.0, bad), InvalidParameterError);
}

TEST_CASE("gaussian mixture values and stability") {
  // single standard component: log pi(0) - log pi((1,0)) = 1/2
  TargetPtr single = gaussian_mixture({{0.0, 0.0}}, {}, {1.0});
  double diff = single->log_density({0.0, 0.0}) - single->log_density({1.0, 0.0});
  CHECK(diff == doctest::Approx(0.5).epsilon(1e-14));

  std::vector<std::vector<double>> means = {{-4, -4}, {4, -4}, {-4, 4}, {4, 4}};
  std::vector<double> w = {0.337, 0.050, 0.284, 0.328};
  TargetPtr mix = gaussian_mixture(means, {}, w);
  check_gradient(*mix, 14, 50, 6.0);

  // log-sum-exp stability forty standard deviations out
  std::vector<double> far = {44.0, 44.0}, g(2);
  mix->grad_log_density(far.data(), g.data());
  CHECK(std::isfinite(g[0]));
  CHECK(std::isfinite(g[1]));
  CHECK(std::isfinite(mix->log_density(far.data())));

  CHECK_THROWS_AS(gaussian_mixture(means, {}, {0.3, 0.3, 0.3, 0.3}), InvalidParameterError);
  CHECK_THROWS_AS(gaussian_mixture(means, {}, {0.5, 0.5, -0.1, 0.1}), InvalidParameterError);
}

TEST_CASE("anisotropic gaussian") {
  TargetPtr t = anisotropic_gaussian(1.0, 100.0);
  auto g = t->grad_log_density({0.7, -0.2});
  CHECK(g[0] == doctest::Approx(-0.7).epsilon(1e-14));
  CHECK(g[1] == doctest::Approx(20.0).epsilon(1e-14));
  check_exact_map_pushforward(*t);
  CHECK_THROWS_AS(anisotropic_gaussian(2.0, 1.0), InvalidParameterError);

  // pushforward covariance of mapped exact samples is I within 3 MC standard errors
  TargetPtr t2 = anisotropic_gaussian(1.0, 4.0);
  const size_t n = 100000;
  std::vector<double> samples(2 * n), x(2);
  t2->sample_exact(3, n, samples.data());
  const Map& S = *t2->exact_map();
  double c11 = 0, c22 = 0, c12 = 0;
  for (size_t i = 0; i < n; ++i) {
    S.forward(&samples[2 * i], x.data());
    c11 += x[0] * x[0];
    c22 += x[1] * x[1];
    c12 += x[0] * x[1];
  }
  c11 /= n;
  c22 /= n;
  c12 /= n;
  double se_diag = std::sqrt(2.0 / n), se_off = std::sqrt(1.0 / n);
  CHECK(std::fabs(c11 - 1.0) <= 3 * se_diag);
  CHECK(std::fabs(c22 - 1.0) <= 3 * se_diag);
  CHECK(std::fabs(c12) <= 3 * se_off);
}

TEST_CASE("target registry") {
  TargetPtr t = target_from_json({{"name", "banana"}, {"s", 4.0}, {"b", 0.01}});
  CHECK(t->name() == "banana");
  CHECK_THROWS_AS(target_from_json({{"name", "banana"}, {"bogus", 1}}), SchemaError);
  CHECK_THROWS_AS(target_from_json({{"name", "nope"}}), SchemaError);
  TargetPtr hr = target_from_json({{"name", "hybrid_rosenbrock"}, {"n1", 4}, {"n2", 2}});
  CHECK(hr->dim() == 7);
}
