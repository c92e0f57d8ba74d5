#pragma once

#include <cstddef>

#include "tmerr/prob_core.hpp"

namespace tmerr {

struct QuadratureRule {
  Vector nodes;
  Vector weights;
};

/// Gauss-Legendre rule on [0, 1]; weights sum to 1. Exact for degree 2n-1.
QuadratureRule gauss_legendre_unit(std::size_t n);

/// Gauss-Hermite rule for the standard normal density: sum_q w_q g(x_q)
/// approximates E[g(Z)], Z ~ N(0,1). Weights sum to 1.
QuadratureRule gauss_hermite_normal(std::size_t n);

/// Composite trapezoid weights for n equispaced nodes with spacing h.
Vector trapezoid_weights(std::size_t n, double h);

}  // namespace tmerr
