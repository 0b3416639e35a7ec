#pragma once

#include <vector>

namespace tmld {

// Probabilist Hermite polynomials He_n: He_0=1, He_1=x, He_{n+1} = x He_n - n He_{n-1}.
// He_n' = n He_{n-1}.

// Fill vals[0..max_order] with He_0(x)..He_max(x).
inline void hermite_all(double x, int max_order, double* vals) {
  vals[0] = 1.0;
  if (max_order >= 1) vals[1] = x;
  for (int n = 1; n < max_order; ++n) vals[n + 1] = x * vals[n] - n * vals[n - 1];
}

inline double hermite(int n, double x) {
  double p0 = 1.0;
  if (n == 0) return p0;
  double p1 = x;
  for (int k = 1; k < n; ++k) {
    double p2 = x * p1 - k * p0;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

// All multi-indices alpha in N^k with |alpha| <= total_order, in graded
// lexicographic order (deterministic).
std::vector<std::vector<int>> total_order_multi_indices(int k, int total_order);

}  // namespace tmld
