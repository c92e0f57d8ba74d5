#include "tmerr/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tmerr/errors.hpp"

namespace tmerr {

namespace {

// Golub-Welsch: nodes are the eigenvalues of the symmetric Jacobi matrix of the
// orthogonal polynomial family, weights are mu0 * (first eigenvector component)^2.
QuadratureRule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag, double mu0) {
  const Eigen::Index n = diag.size();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    J(i, i) = diag(i);
    if (i + 1 < n) {
      J(i, i + 1) = offdiag(i);
      J(i + 1, i) = offdiag(i);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return es.eigenvalues()(static_cast<Eigen::Index>(a)) < es.eigenvalues()(static_cast<Eigen::Index>(b));
  });
  for (std::size_t q = 0; q < order.size(); ++q) {
    const auto idx = static_cast<Eigen::Index>(order[q]);
    const double v0 = es.eigenvectors()(0, idx);
    rule.nodes[q] = es.eigenvalues()(idx);
    rule.weights[q] = mu0 * v0 * v0;
  }
  return rule;
}

}  // namespace

QuadratureRule gauss_legendre_unit(std::size_t n) {
  if (n == 0) throw ContractViolation("gauss_legendre_unit: n must be >= 1");
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd off(std::max<Eigen::Index>(N - 1, 0));
  for (Eigen::Index i = 1; i < N; ++i) {
    const double k = static_cast<double>(i);
    off(i - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  }
  QuadratureRule rule = golub_welsch(diag, off, 2.0);
  // [-1, 1] -> [0, 1]
  for (std::size_t q = 0; q < n; ++q) {
    rule.nodes[q] = 0.5 * (rule.nodes[q] + 1.0);
    rule.weights[q] *= 0.5;
  }
  return rule;
}

QuadratureRule gauss_hermite_normal(std::size_t n) {
  if (n == 0) throw ContractViolation("gauss_hermite_normal: n must be >= 1");
  const auto N = static_cast<Eigen::Index>(n);
  // Probabilists' Hermite polynomials: a_k = 0, b_k = sqrt(k).
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd off(std::max<Eigen::Index>(N - 1, 0));
  for (Eigen::Index i = 1; i < N; ++i) off(i - 1) = std::sqrt(static_cast<double>(i));
  QuadratureRule rule = golub_welsch(diag, off, 1.0);
  // Symmetrize to remove eigen-solver round-off.
  for (std::size_t q = 0; q < n / 2; ++q) {
    const std::size_t r = n - 1 - q;
    const double x = 0.5 * (rule.nodes[r] - rule.nodes[q]);
    const double w = 0.5 * (rule.weights[r] + rule.weights[q]);
    rule.nodes[q] = -x;
    rule.nodes[r] = x;
    rule.weights[q] = rule.weights[r] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

Vector trapezoid_weights(std::size_t n, double h) {
  if (n < 2) throw ContractViolation("trapezoid_weights: need at least 2 nodes");
  Vector w(n, h);
  w.front() = w.back() = 0.5 * h;
  return w;
}

}  // namespace tmerr
