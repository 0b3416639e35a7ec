#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "linalg.hpp"

namespace tmld {

class Map;

// Unnormalized target density on R^d with analytic gradient. Immutable after
// construction; all evaluation is const and thread-safe.
class Target {
 public:
  virtual ~Target() = default;

  int dim() const { return dim_; }
  const std::string& name() const { return name_; }
  const nlohmann::ordered_json& params() const { return params_; }

  virtual double log_density(const double* y) const = 0;
  virtual void grad_log_density(const double* y, double* g) const = 0;

  // A map known to push this target to the standard normal, if one exists.
  std::shared_ptr<const Map> exact_map() const { return exact_map_; }

  virtual bool has_exact_sampler() const { return exact_map_ != nullptr; }
  // n iid draws from the target, row-major n x d. Default route: draw
  // x ~ N(0,I) and apply the inverse of the exact map.
  virtual void sample_exact(uint64_t seed, size_t n, double* out) const;

  // High-accuracy E_pi[phi]. Default: tensor Gauss-Hermite through the exact
  // map when d <= 3, otherwise Monte Carlo with n_mc exact draws.
  virtual double reference_expectation(const std::function<double(const double*)>& phi, size_t n_mc,
                                       uint64_t seed) const;

  // convenience
  double log_density(const std::vector<double>& y) const { return log_density(y.data()); }
  std::vector<double> grad_log_density(const std::vector<double>& y) const {
    std::vector<double> g(dim_);
    grad_log_density(y.data(), g.data());
    return g;
  }

 protected:
  Target(std::string name, int dim, nlohmann::ordered_json params)
      : name_(std::move(name)), dim_(dim), params_(std::move(params)) {}

  std::string name_;
  int dim_;
  nlohmann::ordered_json params_;
  std::shared_ptr<const Map> exact_map_;
};

using TargetPtr = std::shared_ptr<const Target>;

TargetPtr banana(double s, double b);
TargetPtr funnel_posterior(std::vector<double> data, double alpha = 0.75, double beta = 0.5);
TargetPtr hybrid_rosenbrock(int n1, int n2, double mu, double a, la::Mat b);
TargetPtr gaussian_mixture(std::vector<std::vector<double>> means, std::vector<la::Mat> covs,
                           std::vector<double> weights);
TargetPtr anisotropic_gaussian(double m, double L);

// Registry lookup used by CLI configs: {"name": "banana", "s": 4.0, "b": 0.01}.
TargetPtr target_from_json(const nlohmann::json& j);

}  // namespace tmld
