#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "linalg.hpp"

namespace tmld {

class Target;  // targets.hpp

enum class MapKind { affine, banana, rosenbrock, triangular, composed };
enum class Rectifier { softplus, shifted_elu };

std::string to_string(MapKind k);
std::string to_string(Rectifier g);
Rectifier rectifier_from_string(const std::string& s);

// Strictly positive rectifier g and its derivative/inverse. The softplus is
// evaluated with linear/exponential tails outside [-30, 30] so it never
// overflows and stays positive.
double rectifier_eval(Rectifier g, double x);
double rectifier_deriv(Rectifier g, double x);
double rectifier_inverse(Rectifier g, double v);

// One component S_k of a monotone triangular map in the rectified-integral
// parameterization: S_k(z_1..z_k) = f(z_1..z_{k-1}, 0) + int_0^{z_k} g(d_k f(.., t)) dt,
// with f expanded in a probabilist-Hermite basis over the given multi-indices.
struct MonotoneComponent {
  int index = 1;  // k >= 1; the component consumes inputs z_1..z_k
  std::vector<std::vector<int>> multi_indices;
  std::vector<double> coefficients;
  Rectifier rectifier = Rectifier::softplus;
};

// Invertible map S: R^d -> R^d. forward == S, inverse == T = S^{-1}.
// All evaluation methods are pure and safe to call concurrently.
class Map {
 public:
  virtual ~Map() = default;

  int dim() const { return dim_; }
  MapKind kind() const { return kind_; }

  virtual void forward(const double* y, double* x) const = 0;
  virtual void inverse(const double* x, double* y) const = 0;
  // Row-major d x d Jacobian of S at y.
  virtual void jacobian(const double* y, double* J) const = 0;
  virtual double log_det_jacobian(const double* y) const;
  // grad_y log det J_S(y). Lower-triangular maps use the (dS_i/dy_i)^{-1} H_i
  // sum; dense kinds fall back to central finite differences.
  virtual void grad_log_det(const double* y, double* g) const;
  // H[i*d + j] = d^2 S_i / (dy_j dy_i). Default: finite differences of the
  // Jacobian diagonal.
  virtual void component_hessian_vectors(const double* y, double* H) const;
  // Divergence of B = (J_S^T J_S)^{-1}, row-wise: out_k = sum_j dB_kj/dy_j.
  // Default: central finite differences with step 1e-5 (1 + |y|_inf).
  virtual void metric_divergence(const double* y, double* out) const;

  // Second derivatives of the inverse map: H[(k*d + i)*d + l] = d^2 T_k / dx_i dx_l.
  // Default: symmetric second differences of T with step 1e-4 (1 + |x|_inf),
  // which keeps the tensor exactly symmetric in (i, l). Analytic kinds override.
  virtual void inverse_hessian(const double* x, double* H) const;

  virtual bool lower_triangular() const { return false; }

  virtual nlohmann::ordered_json to_json() const = 0;

  // convenience wrappers
  std::vector<double> forward(const std::vector<double>& y) const;
  std::vector<double> inverse(const std::vector<double>& x) const;
  la::Mat jacobian_mat(const std::vector<double>& y) const;

 protected:
  Map(MapKind k, int d) : kind_(k), dim_(d) {}
  MapKind kind_;
  int dim_;
};

using MapPtr = std::shared_ptr<const Map>;

MapPtr make_affine(la::Mat A, std::vector<double> offset);
MapPtr make_affine_diag(std::vector<double> scale, std::vector<double> offset);
MapPtr make_identity(int dim);
MapPtr banana_map(double s, double b);
MapPtr rosenbrock_map(int n1, int n2, double mu, double a, la::Mat b);
MapPtr make_triangular(std::vector<MonotoneComponent> components, int quadrature_points,
                       std::vector<double> pre_scale = {}, std::vector<double> pre_offset = {});
// forward = outer o inner
MapPtr compose(MapPtr outer, MapPtr inner);

MapPtr map_from_json(const nlohmann::json& j);
void save_map(const Map& map, const std::string& path);
MapPtr load_map(const std::string& path);

// Divergence of B = (J_S^T J_S)^{-1} from the inverse-Hessian tensor:
// (div B)_k = sum_i d^2 T_k/dx_i^2 + (J_T w)_k with w_m = sum_{j,l} H_j(m,l) (J_S)_{lj}.
// Exact when the map's inverse Hessian is analytic.
void metric_divergence_via_inverse_hessian(const Map& map, const double* y, double* out);

// Monotone component evaluation at (z_prefix, z_k): returns value and the
// exact diagonal derivative g(d_k f). Used by training and by TriangularMap.
struct ComponentEval {
  double value;
  double ddiag;
};
ComponentEval monotone_component_eval(const MonotoneComponent& c, const double* z_prefix, double z_k,
                                      int quadrature_points);

// ---- pushforward of a target through a map ----------------------------------

// log eta(x) = log pi(T(x)) + log det J_T(x) for eta = S_# pi.
double pushforward_log_density(const Target& target, const Map& map, const double* x);

// grad_x log eta(x) = J_S^{-T}(T(x)) [ grad log pi(T(x)) - grad_y log det J_S ].
// If `y_hint` is non-null it must equal T(x) and skips the inversion.
void pushforward_grad_log_density(const Target& target, const Map& map, const double* x, double* out,
                                  const double* y_hint = nullptr);
std::vector<double> pushforward_grad_log_density(const Target& target, const Map& map,
                                                 const std::vector<double>& x);

}  // namespace tmld
