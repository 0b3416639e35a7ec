#include <doctest.h>

#include <cmath>

#include "diagnostics.hpp"
#include "errors.hpp"
#include "hermite.hpp"
#include "map_learning.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "targets.hpp"
#include "transport.hpp"
#include "util.hpp"

using namespace tmld;

namespace {

std::vector<double> std_normal_samples(size_t n, int d, uint64_t seed) {
  rng::Stream stream(seed, 0);
  std::vector<double> z(n * d);
  for (size_t i = 0; i < n; ++i) stream.normals(i, &z[i * d], d);
  return z;
}

}  // namespace

TEST_CASE("quadrature against a high-order reference") {
  // order-3 integrand through the softplus, |z_k| <= 5 vs a 128-point rule
  MonotoneComponent c;
  c.index = 1;
  c.multi_indices = {{0}, {1}, {2}, {3}};
  c.coefficients = {0.1, 0.6, 0.2, -0.08};
  rng::Stream stream(41, 0);
  for (int i = 0; i < 50; ++i) {
    double zk = -5.0 + 10.0 * stream.uniform(i);
    double v32 = monotone_component_eval(c, &zk, zk, 32).value;
    double v128 = monotone_component_eval(c, &zk, zk, 128).value;
    CHECK(std::fabs(v32 - v128) <= 1e-10 * (1.0 + std::fabs(v128)));
  }
}

TEST_CASE("diagonal derivative is positive everywhere") {
  MonotoneComponent c;
  c.index = 2;
  c.multi_indices = total_order_multi_indices(2, 3);
  c.coefficients.assign(c.multi_indices.size(), 0.0);
  rng::Stream coeff(42, 0);
  for (size_t a = 0; a < c.coefficients.size(); ++a) c.coefficients[a] = -1.0 + 2.0 * coeff.uniform(a);
  rng::Stream stream(43, 0);
  std::vector<double> z(2);
  for (int i = 0; i < 10000; ++i) {
    z[0] = -8.0 + 16.0 * stream.uniform(i, 0);
    z[1] = -8.0 + 16.0 * stream.uniform(i, 1);
    CHECK(monotone_component_eval(c, z.data(), z[1], 16).ddiag > 0.0);
  }
}

TEST_CASE("nll of identity map on standard normal samples") {
  const int d = 2;
  const size_t n = 10000;
  auto z = std_normal_samples(n, d, 44);
  double nll = negative_log_likelihood(*make_identity(d), z.data(), n, d);
  double expected = 0.5 * d * (1.0 + std::log(2 * M_PI));
  // var of 0.5*|Z|^2 is d/2 -> se = sqrt(d/2/n)
  double se = std::sqrt(0.5 * d / static_cast<double>(n));
  CHECK(std::fabs(nll - expected) <= 3 * se);
}

TEST_CASE("whitening beats identity on correlated samples") {
  const size_t n = 5000;
  auto z = std_normal_samples(n, 2, 45);
  // correlate: y1 = 2 z1, y2 = z1 + 0.5 z2
  std::vector<double> y(n * 2);
  for (size_t i = 0; i < n; ++i) {
    y[2 * i] = 2.0 * z[2 * i];
    y[2 * i + 1] = z[2 * i] + 0.5 * z[2 * i + 1];
  }
  la::Mat W(2, 2, {0.5, 0.0, -1.0, 2.0});  // exact whitener: inverse of [[2,0],[1,0.5]]
  double nll_white = negative_log_likelihood(*make_affine(W, {0.0, 0.0}), y.data(), n, 2);
  double nll_ident = negative_log_likelihood(*make_identity(2), y.data(), n, 2);
  CHECK(nll_white < nll_ident);
}

TEST_CASE("exact banana map nll no worse than identity on banana samples") {
  TargetPtr t = banana(4.0, 0.01);
  const size_t n = 5000;
  std::vector<double> samples(2 * n);
  t->sample_exact(46, n, samples.data());
  double nll_exact = negative_log_likelihood(*t->exact_map(), samples.data(), n, 2);
  double nll_ident = negative_log_likelihood(*make_identity(2), samples.data(), n, 2);
  CHECK(nll_exact <= nll_ident);
}

TEST_CASE("one dimensional training recovers the identity") {
  const size_t n = 10000;
  auto z = std_normal_samples(n, 1, 47);
  MapTrainingSpec spec;
  spec.total_order = 1;
  spec.standardize = false;
  ComponentTrainingReport rep;
  MonotoneComponent c = train_component(1, z.data(), n, 1, spec, &rep);
  CHECK(rep.converged);
  // S(z) = c0 + g(c1) z
  double intercept = c.coefficients[0];
  double slope = rectifier_eval(c.rectifier, c.coefficients[1]);
  CHECK(std::fabs(intercept) <= 0.05);
  CHECK(std::fabs(slope - 1.0) <= 0.05);
}

TEST_CASE("one dimensional training recovers an affine gaussian mle") {
  const size_t n = 10000;
  auto z = std_normal_samples(n, 1, 48);
  for (auto& v : z) v = 3.0 + 2.0 * v;  // N(3, 4)
  MapTrainingSpec spec;
  spec.total_order = 1;
  spec.standardize = false;
  MonotoneComponent c = train_component(1, z.data(), n, 1, spec, nullptr);
  double intercept = c.coefficients[0];
  double slope = rectifier_eval(c.rectifier, c.coefficients[1]);
  CHECK(std::fabs(slope - 0.5) <= 0.05);
  CHECK(std::fabs(intercept - (-1.5)) <= 0.05);
}

TEST_CASE("banana training straightens the bend") {
  TargetPtr t = banana(4.0, 0.01);
  const size_t n = 10000;
  std::vector<double> samples(2 * n);
  t->sample_exact(49, n, samples.data());
  MapTrainingSpec spec;
  spec.total_order = 2;
  spec.standardize = true;
  TrainedMap tm = train_map(samples.data(), n, 2, spec);
  // pushforward skewness of the second coordinate
  std::vector<double> x(2);
  RunningStats m;
  std::vector<double> pushed(n);
  for (size_t i = 0; i < n; ++i) {
    tm.map->forward(&samples[2 * i], x.data());
    pushed[i] = x[1];
    m.add(x[1]);
  }
  double sd = std::sqrt(m.variance());
  double skew = 0;
  for (double v : pushed) skew += std::pow((v - m.mean) / sd, 3);
  skew /= static_cast<double>(n);
  CHECK(std::fabs(skew) < 0.1);
}

TEST_CASE("objective separability") {
  TargetPtr t = banana(4.0, 0.01);
  const size_t n = 500;
  std::vector<double> samples(2 * n);
  t->sample_exact(50, n, samples.data());
  MapTrainingSpec spec;
  spec.total_order = 2;
  spec.standardize = false;
  TrainedMap tm = train_map(samples.data(), n, 2, spec);
  double nll = negative_log_likelihood(*tm.map, samples.data(), n, 2);
  // sum the per-component objectives on the same (unstandardized) samples
  const auto* tri = tm.map.get();
  double sum = 0.5 * 2 * std::log(2 * M_PI);
  nlohmann::ordered_json j = tri->to_json();
  for (int k = 1; k <= 2; ++k) {
    MonotoneComponent c;
    c.index = k;
    c.multi_indices = j["components"][k - 1]["multi_indices"].get<std::vector<std::vector<int>>>();
    c.coefficients = j["components"][k - 1]["coefficients"].get<std::vector<double>>();
    c.rectifier = rectifier_from_string(j["components"][k - 1]["rectifier"]);
    sum += component_objective(c, c.coefficients, samples.data(), n, 2, 32, nullptr);
  }
  CHECK(std::fabs(nll - sum) <= 1e-10 * (1.0 + std::fabs(nll)));
}

TEST_CASE("analytic training gradient matches finite differences") {
  TargetPtr t = banana(4.0, 0.01);
  const size_t n = 300;
  std::vector<double> samples(2 * n);
  t->sample_exact(51, n, samples.data());
  MonotoneComponent c;
  c.index = 2;
  c.multi_indices = total_order_multi_indices(2, 2);
  c.coefficients.assign(c.multi_indices.size(), 0.0);
  rng::Stream stream(52, 0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> coeffs(c.multi_indices.size());
    for (size_t a = 0; a < coeffs.size(); ++a) coeffs[a] = -0.8 + 1.6 * stream.uniform(trial, a);
    std::vector<double> grad(coeffs.size());
    component_objective(c, coeffs, samples.data(), n, 2, 32, grad.data());
    for (size_t a = 0; a < coeffs.size(); ++a) {
      std::vector<double> cp(coeffs);
      double step = 1e-6;
      cp[a] = coeffs[a] + step;
      double up = component_objective(c, cp, samples.data(), n, 2, 32, nullptr);
      cp[a] = coeffs[a] - step;
      double um = component_objective(c, cp, samples.data(), n, 2, 32, nullptr);
      double fd = (up - um) / (2 * step);
      CHECK(grad[a] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("training is deterministic") {
  TargetPtr t = banana(4.0, 0.01);
  const size_t n = 2000;
  std::vector<double> samples(2 * n);
  t->sample_exact(53, n, samples.data());
  MapTrainingSpec spec;
  spec.total_order = 2;
  TrainedMap a = train_map(samples.data(), n, 2, spec, 2);
  TrainedMap b = train_map(samples.data(), n, 2, spec, 1);
  CHECK(a.map->to_json().dump() == b.map->to_json().dump());
}

TEST_CASE("sample budget precondition") {
  auto z = std_normal_samples(50, 2, 54);
  MapTrainingSpec spec;
  spec.total_order = 3;  // component 2 needs 10 * C(5,3) = 100 samples
  CHECK_THROWS_AS(train_map(z.data(), 50, 2, spec), InvalidParameterError);
}

TEST_CASE("self map training keeps ksd comparable to raw samples") {
  const size_t n = 2000;
  auto z = std_normal_samples(n, 2, 55);
  MapTrainingSpec spec;
  spec.total_order = 2;
  TrainedMap tm = train_map(z.data(), n, 2, spec);
  std::vector<double> pushed(n * 2);
  for (size_t i = 0; i < n; ++i) tm.map->forward(&z[2 * i], &pushed[2 * i]);
  TargetPtr ref = anisotropic_gaussian(1.0, 1.0);  // standard normal score
  double ksd_raw = ksd(z.data(), n, *ref);
  double ksd_pushed = ksd(pushed.data(), n, *ref);
  CHECK(ksd_pushed <= 2.0 * ksd_raw);
}

TEST_CASE("training spec validation") {
  MapTrainingSpec spec;
  spec.quadrature_points = 4;
  CHECK_THROWS_AS(spec.validate(), InvalidParameterError);
  spec = MapTrainingSpec{};
  spec.total_order = 9;
  CHECK_THROWS_AS(spec.validate(), InvalidParameterError);
}
