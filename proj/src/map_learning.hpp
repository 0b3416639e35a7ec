#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "transport.hpp"

namespace tmld {

// Training setup for monotone triangular maps over a fixed total-order
// probabilist-Hermite basis.
struct MapTrainingSpec {
  int total_order = 2;              // <= 6
  Rectifier rectifier = Rectifier::softplus;
  int quadrature_points = 32;       // >= 8
  int max_iters = 500;
  double grad_tol = 1e-6;
  bool standardize = true;

  void validate() const;
};

struct ComponentTrainingReport {
  int component = 0;  // 1-based
  double objective = 0;
  double grad_norm = 0;
  int iterations = 0;
  bool converged = false;
};

struct TrainedMap {
  MapPtr map;
  std::vector<ComponentTrainingReport> reports;
};

// Sample -> map NLL under the standard-normal reference:
// (1/N) sum_i [ |S(Z_i)|^2 / 2 - log det J_S(Z_i) ] + (d/2) log(2 pi).
double negative_log_likelihood(const Map& map, const double* samples, size_t n, int d);

// Component-wise training objective (the k-th summand of the NLL, without the
// reference constant), plus its analytic coefficient gradient. Exposed for the
// gradient tests.
double component_objective(const MonotoneComponent& c, const std::vector<double>& coeffs,
                           const double* samples, size_t n, int d, int quadrature_points, double* grad);

// Train component k (1-based) on (already standardized, if requested) samples.
MonotoneComponent train_component(int k, const double* samples, size_t n, int d, const MapTrainingSpec& spec,
                                  ComponentTrainingReport* report);

// Full triangular-map training; standardization becomes a diagonal affine
// pre-map inside the returned map. Deterministic given (samples, spec).
TrainedMap train_map(const double* samples, size_t n, int d, const MapTrainingSpec& spec, unsigned jobs = 0);

}  // namespace tmld
