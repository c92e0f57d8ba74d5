#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include "tmerr/prob_core.hpp"

namespace tmerr {

/// Plain copy of the evaluation counters.
struct CostSnapshot {
  std::uint64_t g_plus = 0;   // exact-model evaluations
  std::uint64_t g_minus = 0;  // reduced-model evaluations
  std::uint64_t optimizer_steps = 0;
  std::uint64_t posterior_samples_drawn = 0;

  bool operator==(const CostSnapshot&) const = default;
};

/// Monotone evaluation counters shared by every model of one problem.
class CostLedger {
 public:
  void add_exact(std::uint64_t n = 1) noexcept { g_plus_.fetch_add(n, std::memory_order_relaxed); }
  void add_reduced(std::uint64_t n = 1) noexcept { g_minus_.fetch_add(n, std::memory_order_relaxed); }
  void add_optimizer_steps(std::uint64_t n = 1) noexcept { steps_.fetch_add(n, std::memory_order_relaxed); }
  void add_posterior_samples(std::uint64_t n) noexcept { samples_.fetch_add(n, std::memory_order_relaxed); }

  CostSnapshot snapshot() const noexcept;

 private:
  std::atomic<std::uint64_t> g_plus_{0};
  std::atomic<std::uint64_t> g_minus_{0};
  std::atomic<std::uint64_t> steps_{0};
  std::atomic<std::uint64_t> samples_{0};
};

enum class ModelKind { AffineExact, AffineReduced, MachineExact, MachineReduced };

std::string to_string(ModelKind kind);

/**
 * One of the shipped forward models, instrumented with a counter.
 *
 *   affine-exact     F(x) = A x + c          (dim 2)
 *   affine-reduced   f(x) = x                (dim 2)
 *   machine-exact    F(x) = 2 a x / (a + x)  (dim 1)
 *   machine-reduced  f(x) = 2 x              (dim 1)
 *
 * Every evaluate call bumps g_plus (exact kinds) or g_minus (reduced kinds) by
 * one. The Jacobian comes with the evaluation and is not counted separately.
 */
class ForwardModel {
 public:
  static ForwardModel affine_exact(std::array<double, 4> A, std::array<double, 2> c,
                                   std::shared_ptr<CostLedger> ledger);
  static ForwardModel affine_reduced(std::shared_ptr<CostLedger> ledger);
  static ForwardModel machine_exact(double a, std::shared_ptr<CostLedger> ledger);
  static ForwardModel machine_reduced(std::shared_ptr<CostLedger> ledger);

  ModelKind kind() const noexcept { return kind_; }
  bool is_exact() const noexcept {
    return kind_ == ModelKind::AffineExact || kind_ == ModelKind::MachineExact;
  }
  std::size_t dim() const noexcept { return dim_; }
  /// Output component k depends on input component k only.
  bool componentwise() const noexcept;

  Vector evaluate(std::span<const double> x) const;
  /// Writes F(x) into `out` and dF/dx (row-major dim x dim) into `jac`.
  void evaluate_with_jacobian(std::span<const double> x, std::span<double> out,
                              std::span<double> jac) const;

  const std::shared_ptr<CostLedger>& ledger() const noexcept { return ledger_; }
  ForwardModel with_ledger(std::shared_ptr<CostLedger> ledger) const;

  const std::array<double, 4>& A() const noexcept { return A_; }
  const std::array<double, 2>& c() const noexcept { return c_; }
  double machine_constant() const noexcept { return a_; }

 private:
  ForwardModel(ModelKind kind, std::size_t dim, std::shared_ptr<CostLedger> ledger);
  void count() const noexcept;
  void compute(std::span<const double> x, std::span<double> out, std::span<double> jac) const;

  ModelKind kind_;
  std::size_t dim_;
  std::array<double, 4> A_{1, 0, 0, 1};
  std::array<double, 2> c_{0, 0};
  double a_ = 0.0;
  std::shared_ptr<CostLedger> ledger_;
};

/// M(x) = F(x) - f(x). One evaluation on each model.
Vector model_error(const ForwardModel& exact, const ForwardModel& reduced, std::span<const double> x);

/// Synthetic measurements y_j = F(x*) + eta_j for j = 1..d.
struct Observation {
  Matrix y;  // d x dim_Y
  Vector x_star;
  Vector noise_std;
  std::uint64_t seed_tag = 0;

  std::size_t count() const noexcept { return y.rows(); }
  std::size_t dim() const noexcept { return y.cols(); }
  Vector row_mean() const;
  /// sum_j (y_jk - mean_k)^2 per component.
  Vector row_scatter() const;
};

/// noise_std = noise_level * |F(x*)|. `zero_noise` keeps that noise_std but
/// writes the noiseless rows, i.e. the eta = 0 realization.
Observation generate_synthetic(const ForwardModel& exact, std::span<const double> x_star,
                               std::size_t d, double noise_level, RngStream& stream,
                               bool zero_noise = false);

/// Everything needed to pose one inverse problem with model error.
struct InverseProblem {
  std::shared_ptr<CostLedger> ledger;
  ForwardModel exact;
  ForwardModel reduced;
  UniformBox prior;
  Observation obs;
  GaussianDiag noise;  // zero mean, obs.noise_std

  std::size_t dim() const noexcept { return prior.dim(); }
  CostSnapshot ledger_snapshot() const { return ledger->snapshot(); }
};

struct ProblemSetup {
  Vector x_star;
  double noise_level = 0.05;
  std::size_t d = 1;
  bool zero_noise = true;
  std::uint64_t seed = 0;
  UniformBox prior;
};

/// Affine benchmark, A = diag(2, 3), c = (5, 5), prior [0,15]^2 by default.
InverseProblem make_affine_problem(const ProblemSetup& setup);
/// Simple machine, a = 10, prior [0,15] by default.
InverseProblem make_machine_problem(const ProblemSetup& setup, double a = 10.0);

}  // namespace tmerr
