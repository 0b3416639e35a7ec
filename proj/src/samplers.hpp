#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "linalg.hpp"
#include "targets.hpp"
#include "transport.hpp"

namespace tmld {

enum class Scheme { ula, tmula, emrmld, tmula_irr, tmuila, uila, rmld };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct ImplicitSolverOpts {
  double tol = 1e-10;
  int max_iters = 50;
  int max_halvings = 30;
};

// State-dependent reversible-perturbation metric B(y) with its divergence and
// noise factor, for the explicit-metric RMLD scheme.
class Metric {
 public:
  virtual ~Metric() = default;
  virtual int dim() const = 0;
  virtual void B(const double* y, double* B_out) const = 0;             // row-major d x d
  virtual void div_B(const double* y, double* out) const = 0;           // row-wise divergence
  virtual void sqrtB_apply(const double* y, const double* xi, double* out) const = 0;
  virtual std::string name() const = 0;
};

using MetricPtr = std::shared_ptr<const Metric>;

// Expected-Fisher + prior-Hessian metric for the funnel posterior, in the form
// printed in the reference experiment: B = diag(1/(2 N beta + e^g), 1/(N e^{-2g} + 1/3)).
MetricPtr funnel_gc_metric(size_t n_data, double beta);

struct SamplerConfig {
  Scheme scheme = Scheme::ula;
  double h = 1e-3;
  MapPtr map;                      // tmula / emrmld / tmula_irr / tmuila
  std::optional<la::Mat> skew;     // D for tmula_irr
  MetricPtr metric;                // rmld
  ImplicitSolverOpts implicit_solver;

  void validate(int target_dim) const;  // throws InvalidParameterError
};

constexpr double kDivergenceThreshold = 1e8;

struct Chain {
  Scheme scheme = Scheme::ula;
  double h = 0;
  uint64_t seed = 0;
  int dim = 0;
  std::vector<double> states;  // rows x dim; row 0 is the initial state
  std::optional<size_t> diverged_at;

  size_t rows() const { return dim == 0 ? 0 : states.size() / dim; }
  const double* row(size_t i) const { return states.data() + i * dim; }
};

// ---- single steps ----------------------------------------------------------------
// All steps take the noise vector xi ~ N(0, I) from the caller so schemes can
// be compared under common random numbers.

void ula_step(const Target& target, const double* y, double h, const double* xi, double* y_out);

// Reference-space TMULA step; x is authoritative, y must equal T(x).
void tmula_step(const Target& target, const Map& map, const double* x, const double* y, double h,
                const double* xi, double* x_out, double* y_out);

void emrmld_step(const Target& target, const Map& map, const double* y, double h, const double* xi,
                 double* y_out);

// Irreversible reference-space step with constant skew-symmetric D (TMGiIrr).
void reference_irr_step(const Target& target, const Map& map, const double* x, const double* y, double h,
                        const double* xi, const la::Mat& D, double* x_out, double* y_out);

// Split-step implicit TMULA: solve u = S(y) + h grad log eta(u), then add noise.
void tmuila_step(const Target& target, const Map& map, const double* y, double h, const double* xi,
                 const ImplicitSolverOpts& solver, double* y_out);

// Split-step implicit ULA in target space.
void uila_step(const Target& target, const double* y, double h, const double* xi,
               const ImplicitSolverOpts& solver, double* y_out);

void rmld_step(const Target& target, const Metric& metric, const double* y, double h, const double* xi,
               double* y_out);

// ---- chain running ----------------------------------------------------------------

// K steps from y0 with noise from the counter generator keyed by (seed, stream_id).
// Divergence (non-finite state, sup-norm above 1e8, or a step error) stops the
// chain and records the step index.
Chain run_chain(const Target& target, const SamplerConfig& config, const std::vector<double>& y0, size_t K,
                uint64_t seed, uint64_t stream_id = 0);

// Streaming variant: on_state(k, y) is called for k = 0..K (row 0 is y0);
// nothing is stored. Returns the divergence step, if any.
std::optional<size_t> run_chain_streaming(const Target& target, const SamplerConfig& config,
                                          const std::vector<double>& y0, size_t K, uint64_t seed,
                                          uint64_t stream_id,
                                          const std::function<void(size_t, const double*)>& on_state);

void write_chain_csv(const Chain& chain, const std::string& path);
Chain read_chain_csv(const std::string& path);

}  // namespace tmld
