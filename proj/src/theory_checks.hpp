#pragma once

#include <cstdint>
#include <vector>

#include "linalg.hpp"
#include "targets.hpp"
#include "transport.hpp"

namespace tmld {

// Pointwise numerical verification that the mapped Langevin drift/diffusion
// match the reversible (and irreversible) perturbation forms.
struct EquivalenceReport {
  std::vector<double> point;
  double drift_residual = 0;
  double diffusion_residual = 0;
  double skew_cancellation_residual = 0;  // giirr check only
  double tolerance = 0;
  bool pass = false;
};

// Mapped drift J_T grad_x log eta(S(y)) + c(y), c_k = sum_i d^2 T_k / dx_i^2,
// against B(y) grad log pi(y) + div B(y) with B = (J_S^T J_S)^{-1}. The
// diffusion residual compares a finite-difference Jacobian of T against
// J_S(y)^{-1}.
EquivalenceReport check_tmrmld_equivalence(const Target& target, const Map& map,
                                           const std::vector<double>& y, double tol);

// Same with the constant skew D: mapped drift J_T (I+D) grad_x log eta + c
// against P grad log pi + div P, P = B + J_T D J_T^T. Also evaluates the
// skew-cancellation sum  sum_{i,l} D_{li} d^2 T_k / dx_i dx_l.
EquivalenceReport check_giirr_equivalence(const Target& target, const Map& map, const la::Mat& D,
                                          const std::vector<double>& y, double tol);

struct OneStepDiscrepancy {
  double mc_estimate = 0;
  double closed_form = 0;
  double rel_err = 0;
};

// E | F_TMULA - F_EMRMLD |^2 under common noise at state y, against the
// h^2 [ sum (d^2 T_i/dx_j^2)^2 + sum (d^2 T_i/dx_j dx_l)^2 ] law.
OneStepDiscrepancy onestep_discrepancy(const Target& target, const Map& map, const std::vector<double>& y,
                                       double h, size_t n_mc, uint64_t seed);

struct OptimalRate {
  double r = 0;
  double dr_dL = 0;
};

// r(L) = 1 - mL/(m+L)^2 and its derivative m(L-m)/(m+L)^3.
OptimalRate optimal_rate(double m, double L);

// max over the given x-space points of the Frobenius norm of J_T(x).
double jacobian_bound_estimate(const Map& map, const double* points, size_t n);

// | grad_y log det J_S + J_S^T (div_y J_S^{-T}) |_inf with the divergence by
// central differences (step 1e-5 (1+|y|_inf)).
double appendix_a_identity_residual(const Map& map, const std::vector<double>& y);

}  // namespace tmld
