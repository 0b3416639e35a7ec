#include "quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace tmld {

namespace {

// Newton iteration on Legendre P_n from Chebyshev-like initial guesses.
GaussLegendre compute_gl(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  GaussLegendre q;
  q.nodes.resize(n);
  q.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      if (n == 1) p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      // p1 = P_n(x), p0 = P_{n-1}(x)
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / pp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    q.nodes[n - 1 - i] = x;  // ascending order
    q.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * pp * pp);
  }
  return q;
}

std::map<int, GaussLegendre> g_cache;
std::mutex g_mutex;

// Orthonormal probabilist Hermite values h_0..h_n at x.
void orthonormal_hermite(double x, int n, std::vector<double>& h) {
  h.resize(n + 1);
  h[0] = 1.0;
  if (n >= 1) h[1] = x;
  for (int k = 1; k < n; ++k) h[k + 1] = (x * h[k] - std::sqrt(double(k)) * h[k - 1]) / std::sqrt(double(k + 1));
}

GaussHermite compute_gh(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: order must be >= 1");
  GaussHermite q;
  std::vector<double> h;
  // Bracket the n roots of h_n by a fine scan, then polish with Newton.
  double bound = std::sqrt(2.0 * (2.0 * n + 1.0)) + 2.0;
  int scan = 200 * n;
  double prev_x = -bound;
  orthonormal_hermite(prev_x, n, h);
  double prev_v = h[n];
  for (int i = 1; i <= scan && static_cast<int>(q.nodes.size()) < n; ++i) {
    double x = -bound + 2.0 * bound * i / scan;
    orthonormal_hermite(x, n, h);
    double v = h[n];
    if (prev_v == 0.0 || v * prev_v < 0.0) {
      double lo = prev_x, hi = x;
      double root = 0.5 * (lo + hi);
      for (int it = 0; it < 100; ++it) {
        orthonormal_hermite(root, n, h);
        double f = h[n];
        double fp = std::sqrt(double(n)) * h[n - 1];
        double step = f / fp;
        double next = root - step;
        if (!(next > lo && next < hi)) {
          if (f * prev_v < 0.0)
            hi = root;
          else
            lo = root;
          next = 0.5 * (lo + hi);
        }
        if (std::fabs(next - root) < 1e-15 * (1.0 + std::fabs(root))) {
          root = next;
          break;
        }
        root = next;
      }
      q.nodes.push_back(root);
    }
    prev_x = x;
    prev_v = v;
  }
  if (static_cast<int>(q.nodes.size()) != n) throw std::runtime_error("gauss_hermite: root search failed");
  q.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    orthonormal_hermite(q.nodes[i], n - 1, h);
    double s = 0;
    for (int k = 0; k < n; ++k) s += h[k] * h[k];
    q.weights[i] = 1.0 / s;  // Christoffel weights; sum to 1 for this normalization
  }
  return q;
}

std::map<int, GaussHermite> gh_cache;

}  // namespace

const GaussLegendre& gauss_legendre(int n) {
  std::lock_guard<std::mutex> lk(g_mutex);
  auto it = g_cache.find(n);
  if (it == g_cache.end()) it = g_cache.emplace(n, compute_gl(n)).first;
  return it->second;
}

const GaussHermite& gauss_hermite(int n) {
  std::lock_guard<std::mutex> lk(g_mutex);
  auto it = gh_cache.find(n);
  if (it == gh_cache.end()) it = gh_cache.emplace(n, compute_gh(n)).first;
  return it->second;
}

}  // namespace tmld
