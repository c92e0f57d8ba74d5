#pragma once

#include <cstddef>
#include <span>

#include "tmerr/forward_models.hpp"
#include "tmerr/prob_core.hpp"
#include "tmerr/transport.hpp"

namespace tmerr {

enum class BankLayout { Flat, Nested };

/// Frozen model-error values M(T*(z)). Row i*m + j holds eps_ij for the
/// nested layout; the flat layout is the m == 1 case.
struct ErrorSampleBank {
  Matrix eps;
  std::size_t producer_tag = 0;
  BankLayout layout = BankLayout::Flat;
  std::size_t n = 0;
  std::size_t m = 1;

  std::size_t size() const noexcept { return eps.rows(); }
  std::span<const double> at(std::size_t i, std::size_t j) const { return eps.row(i * m + j); }

  static ErrorSampleBank zeros(BankLayout layout, std::size_t n, std::size_t m, std::size_t dim_y);
};

struct LossValue {
  double value = 0.0;
  Vector grad;
  std::size_t n_used = 0;
  std::size_t m_used = 0;
};

/// m = ceil(s^(1/3)), n = floor(s / m); m_override > 0 replaces m.
struct NestedSplit {
  std::size_t n = 0;
  std::size_t m = 0;
};
NestedSplit nested_split(std::size_t s, std::size_t m_override = 0);

/// phi = sum_j ln pi_eta(y_j - f(T(x)) - eps_row). One reduced-model evaluation.
double potential_phi(const TriangularMap& T, std::span<const double> x, std::span<const double> eps_row,
                     const InverseProblem& problem);

/// Jensen loss. A flat bank pairs eps_i with x_i; a nested bank averages phi
/// over j before the sum over i (the mean that nmc_loss replaces by log-mean-exp).
LossValue jensen_loss(const TriangularMap& T, const ErrorSampleBank& bank, const SampleBatch& x_batch,
                      const InverseProblem& problem);

/// Nested Monte Carlo loss with inner term -(logsumexp_j phi_ij - ln m).
LossValue nmc_loss(const TriangularMap& T, const ErrorSampleBank& bank, const SampleBatch& x_batch,
                   const InverseProblem& problem);

/// Loss without a model-error term, using `model` (exact or reduced) directly.
/// One evaluation of `model` per sample.
LossValue direct_loss(const TriangularMap& T, const ForwardModel& model, const SampleBatch& x_batch,
                      const InverseProblem& problem);

/// L(T, T*) with both reference expectations by tensorized Gauss-Hermite rules
/// of `nodes` points per axis. Model evaluations go to a private ledger.
double exact_loss_quadrature(const TriangularMap& T, const TriangularMap& Tstar, const InverseProblem& problem,
                             std::size_t nodes = 40);

}  // namespace tmerr
