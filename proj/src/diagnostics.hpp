#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "linalg.hpp"
#include "samplers.hpp"
#include "targets.hpp"

namespace tmld {

struct TestFunction {
  std::string name;
  int dim = 0;
  std::function<double(const double*)> eval;
};

// Named test functions used by the experiments and the CLI.
TestFunction test_function(const std::string& name, int dim);

double ergodic_average(const double* phis, size_t n);
double ergodic_average(const Chain& chain, const TestFunction& phi, size_t burn_in);

// Batch-means asymptotic variance with M = floor(sqrt(n)) batches of size
// floor(n/M). Requires at least 100 retained values.
double batch_means_avar(const double* phis, size_t n);
double batch_means_avar(const Chain& chain, const TestFunction& phi, size_t burn_in);

struct KsdKernel {
  double c = 1.0;
  double beta = -0.5;
};

// Kernelized Stein discrepancy with the IMQ base kernel (V-statistic by
// default; set u_statistic to drop the diagonal). Row sums run in parallel and
// are combined by pairwise summation, so the result is independent of the
// thread count.
double ksd(const double* points, size_t n, int d, const std::function<void(const double*, double*)>& score,
           KsdKernel kernel = {}, unsigned jobs = 0, bool u_statistic = false);

double ksd(const double* points, size_t n, const Target& target, KsdKernel kernel = {}, unsigned jobs = 0,
           bool u_statistic = false);

// Geometric-rate Wasserstein-squared bound for the mapped chain:
// (1/rho^2) (1 - kappa h / 2)^k (2 dist0_sq + 2d/m - C) + C / rho^2,
// kappa = 2mL/(m+L), C = (2 L^2 d / kappa) [h (1/kappa + h)] (2 + L^2 h/m + L^2 h^2/6).
// rho = 1 recovers the unmapped bound. Requires 0 < h <= 1/(m+L).
double wasserstein_bound(double m, double L, double h, long k, int d, double dist0_sq, double rho);

// Closed-form W2^2 between Gaussians (Bures metric).
double gaussian_w2_squared(const std::vector<double>& mean1, const la::Mat& cov1,
                           const std::vector<double>& mean2, const la::Mat& cov2);

struct BiasSweepRow {
  double h = 0;
  size_t steps = 0;
  double estimate = 0;    // ergodic average
  double e_hat = 0;       // estimate - truth
  double e_over_h = 0;
  double avar = 0;        // batch-means AVar of phi over the retained chain
  bool diverged = false;
};

struct BiasSweepResult {
  std::vector<BiasSweepRow> rows;
  double lambda1_hat = 0;  // sign per e(phi,h) = -lambda_1 h: lambda1_hat = -mean(e/h)
};

// One long chain of physical time T per step size. Diverged step sizes are
// reported and excluded from the lambda estimate.
BiasSweepResult bias_sweep(const Target& target, const SamplerConfig& config_template,
                           const TestFunction& phi, double truth, const std::vector<double>& h_list,
                           double time_horizon, const std::vector<double>& y0, uint64_t seed,
                           double burn_in_fraction = 0.1, unsigned jobs = 0);

struct MseCurvePoint {
  size_t length = 0;
  double bias = 0;
  double variance = 0;
  double mse = 0;  // bias^2 + variance by construction
};

struct MseConfigResult {
  std::string label;
  std::vector<MseCurvePoint> curve;
  size_t n_chains = 0;
  size_t n_diverged = 0;
  double avar_mean = 0;
  double avar_std = 0;
};

struct MseStudy {
  double truth = 0;
  std::vector<MseConfigResult> configs;
};

// n_chains independent chains per config; bias/variance/MSE of the running
// ergodic average at geometrically spaced lengths. Diverged chains are counted
// and excluded.
MseStudy mse_study(const Target& target,
                   const std::vector<std::pair<std::string, SamplerConfig>>& configs,
                   const TestFunction& phi, double truth, int n_chains, size_t K,
                   const std::vector<double>& y0, uint64_t seed, double burn_in_fraction = 0.1,
                   unsigned jobs = 0);

}  // namespace tmld
