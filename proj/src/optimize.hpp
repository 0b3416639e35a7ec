#pragma once

#include <functional>
#include <vector>

namespace tmld {

struct OptimOptions {
  int max_iters = 500;
  double grad_tol = 1e-6;  // on the euclidean gradient norm
};

struct OptimResult {
  std::vector<double> x;
  double f = 0;
  double grad_norm = 0;
  int iters = 0;
  bool converged = false;
};

// Objective callback: returns f(x) and fills grad (same length as x).
using ObjectiveFn = std::function<double(const double* x, double* grad)>;

// Deterministic BFGS with a strong-Wolfe line search.
OptimResult minimize_bfgs(const ObjectiveFn& fg, std::vector<double> x0, const OptimOptions& opts);

}  // namespace tmld
