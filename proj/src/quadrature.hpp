#pragma once

#include <vector>

namespace tmld {

// Gauss-Legendre nodes/weights on [-1, 1]. Computed once per order and cached.
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};

const GaussLegendre& gauss_legendre(int n);

// Integrate f over [0, b] (b may be negative) with an n-point rule.
template <typename F>
double integrate_0_to(const F& f, double b, int n) {
  const GaussLegendre& q = gauss_legendre(n);
  double half = 0.5 * b;
  double s = 0;
  for (int i = 0; i < n; ++i) s += q.weights[i] * f(half * (q.nodes[i] + 1.0));
  return half * s;
}

// Gauss-Hermite rule for the standard normal weight exp(-x^2/2)/sqrt(2pi);
// weights sum to 1, so sum_i w_i f(x_i) approximates E[f(X)], X ~ N(0,1).
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};

const GaussHermite& gauss_hermite(int n);

}  // namespace tmld
