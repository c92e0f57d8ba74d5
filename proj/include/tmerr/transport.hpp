#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tmerr/prob_core.hpp"
#include "tmerr/quadrature.hpp"

namespace tmerr {

struct MapEvaluation {
  Vector y;
  double logdet = 0.0;  // sum_k ln dT_k/dx_k, squash included
};

/// Per-sample forward pass with parameter sensitivities.
struct MapSensitivity {
  MapEvaluation eval;
  Matrix dy_dtheta;  // dim x num_params
  Vector dlogdet_dtheta;
};

/// Upstream partials of a batch loss: dL/dy (n x dim) and dL/dlogdet (n).
struct MapUpstream {
  Matrix dy;
  Vector dlogdet;
};

enum class MapInit { IdentityToBox, Randomized };

/**
 * Monotone lower-triangular map composed with a componentwise box squash.
 *
 * Core component k:
 *   u_k = c_k(x_<k) + int_0^{x_k} (p_k(t, x_<k)^2 + kappa) dt
 * with c_k and p_k polynomials of total degree <= `degree` in their arguments.
 * The integral is evaluated with a (degree+1)-point Gauss-Legendre rule, which
 * is exact for the degree-2*degree integrand. du_k/dx_k >= kappa > 0.
 *
 * Squash: y_k = lo_k + (hi_k - lo_k) * sigmoid(u_k), onto the open box.
 *
 * theta layout: for each component k in order, the offset coefficients
 * followed by the integrand coefficients. Monomial exponents are listed by
 * total degree, then lexicographically; in the integrand the first variable is t.
 */
class TriangularMap {
 public:
  static constexpr double kDefaultKappa = 1e-3;

  TriangularMap(std::size_t dim, std::size_t degree, UniformBox box, double kappa = kDefaultKappa);

  static TriangularMap init(std::size_t dim, std::size_t degree, const UniformBox& box, MapInit mode,
                            std::uint64_t seed = 0);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t degree() const noexcept { return degree_; }
  double kappa() const noexcept { return kappa_; }
  const UniformBox& box() const noexcept { return box_; }
  std::size_t num_params() const noexcept { return theta_.size(); }

  const Vector& theta() const noexcept { return theta_; }
  void set_theta(Vector theta);

  MapEvaluation forward(std::span<const double> x) const;
  MapSensitivity forward_with_sensitivity(std::span<const double> x) const;

  /// Core (pre-squash) image.
  Vector core(std::span<const double> x) const;
  /// d core_k / d x_k at x.
  double core_diagonal(std::span<const double> x, std::size_t k) const;

  /// Componentwise inverse. Throws DomainError for y on or outside the box.
  Vector inverse(std::span<const double> y) const;

  bool operator==(const TriangularMap& o) const {
    return dim_ == o.dim_ && degree_ == o.degree_ && kappa_ == o.kappa_ && box_ == o.box_ &&
           theta_ == o.theta_;
  }

  /// Index of the constant integrand coefficient of component k.
  std::size_t integrand_constant_index(std::size_t k) const { return blocks_[k].integrand_begin; }
  std::size_t offset_constant_index(std::size_t k) const { return blocks_[k].offset_begin; }

 private:
  using Exponents = std::vector<std::uint8_t>;
  struct Block {
    std::size_t offset_begin = 0;
    std::vector<Exponents> offset_terms;  // over x_<k
    std::size_t integrand_begin = 0;
    std::vector<Exponents> integrand_terms;  // over (t, x_<k)
  };

  double offset_value(std::size_t k, std::span<const double> x, std::span<double> feat) const;
  double integrand_value(std::size_t k, double t, std::span<const double> x, std::span<double> feat) const;
  double core_component(std::size_t k, std::span<const double> x) const;

  std::size_t dim_;
  std::size_t degree_;
  double kappa_;
  UniformBox box_;
  Vector theta_;
  std::vector<Block> blocks_;
  QuadratureRule legendre_;
};

/// log pi_ref(T^-1(y)) - logdet(T^-1(y)).
double pushforward_logpdf(const TriangularMap& map, const GaussianDiag& ref, std::span<const double> y);

/// sum_i [ upstream.dy(i,.) . dy_i/dtheta + upstream.dlogdet(i) dlogdet_i/dtheta ].
Vector grad_theta(const TriangularMap& map, const Matrix& x_batch, const MapUpstream& upstream);

/// Text record {dim, degree, kappa, box, theta[]}, 17 significant digits.
std::string serialize(const TriangularMap& map);
TriangularMap deserialize(const std::string& text);

/// Numerically stable logistic helpers.
double sigmoid(double u) noexcept;
double log_sigmoid(double u) noexcept;

}  // namespace tmerr
