#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tmerr/forward_models.hpp"
#include "tmerr/losses.hpp"
#include "tmerr/transport.hpp"

namespace tmerr {

struct AdamOptions {
  double step_size = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  AdamOptions options;
  Vector m;
  Vector v;
  std::uint64_t step_count = 0;

  OptimizerState() = default;
  OptimizerState(std::size_t num_params, AdamOptions opts)
      : options(opts), m(num_params, 0.0), v(num_params, 0.0) {}

  /// One bias-corrected Adam update of theta in place.
  void step(Vector& theta, const Vector& grad);
};

using LossFn = std::function<LossValue(const TriangularMap&)>;

/// N Adam steps on `loss`. A non-finite loss or gradient throws NumericError
/// carrying the (0-based) step index.
TriangularMap optimize(const LossFn& loss, TriangularMap T0, std::size_t n_steps, OptimizerState& opt);

enum class Algorithm { Full, Reduced, Iterative, IterativeMod };
enum class LossKind { Jensen, Nmc };
enum class TerminationReason { DeltaConverged, MaxIterations };

std::string to_string(Algorithm a);
std::string to_string(LossKind k);
std::string to_string(TerminationReason r);

struct SolverConfig {
  Algorithm algorithm = Algorithm::Iterative;
  LossKind loss = LossKind::Nmc;
  std::size_t s = 1000;
  std::size_t m_override = 0;
  std::size_t degree = 1;
  MapInit init = MapInit::IdentityToBox;
  AdamOptions adam;
  double delta = 1e-3;
  std::size_t max_iterations = 500;
  // The delta stopping test is skipped before this many iterations.
  std::size_t min_iterations = 2;
  std::size_t L_mod = 50;
  std::size_t N_mod = 10;
  std::uint64_t seed = 0;
};

struct IterationRecord {
  std::size_t iter = 0;
  double loss = 0.0;
  CostSnapshot cost;
  double wall_ms = 0.0;
};

struct IterationTrace {
  std::vector<IterationRecord> records;
  TerminationReason termination_reason = TerminationReason::MaxIterations;
};

struct SolverHooks {
  /// After each recorded step, with the map produced by that step.
  std::function<void(const IterationRecord&, const TriangularMap&)> on_step;
  /// Before each optimizer step (global 1-based index), with the map it starts from.
  std::function<void(std::size_t, const TriangularMap&)> before_step;
};

struct SolverResult {
  TriangularMap map;
  IterationTrace trace;
};

/// Bank size used by the iterative algorithms: s (Jensen) or n*m (nMC).
std::size_t bank_size(const SolverConfig& cfg);

/// eps = M(T(z)) for z drawn from `stream`; g_plus and g_minus each grow by the bank size.
ErrorSampleBank refresh_bank(const TriangularMap& T, BankLayout layout, std::size_t n, std::size_t m,
                             RngStream& stream, const InverseProblem& problem, std::size_t producer_tag = 0);

SolverResult run_full(const SolverConfig& cfg, InverseProblem& problem, const SolverHooks& hooks = {});
SolverResult run_reduced(const SolverConfig& cfg, InverseProblem& problem, const SolverHooks& hooks = {});
SolverResult run_iterative(const SolverConfig& cfg, InverseProblem& problem, const SolverHooks& hooks = {});
SolverResult run_iterative_mod(const SolverConfig& cfg, InverseProblem& problem, const SolverHooks& hooks = {});
SolverResult run_solver(const SolverConfig& cfg, InverseProblem& problem, const SolverHooks& hooks = {});

/// S reference draws pushed through T. Bumps posterior_samples_drawn only.
SampleBatch sample_posterior(const TriangularMap& T, std::size_t S, RngStream& stream, CostLedger* ledger = nullptr);

/// Closed-form counter values for a completed run with `steps` recorded optimizer steps.
struct ExpectedCost {
  std::uint64_t g_plus = 0;
  std::uint64_t g_minus = 0;
  std::string g_plus_formula;
  std::string g_minus_formula;
};
ExpectedCost expected_cost(const SolverConfig& cfg, std::size_t steps);

}  // namespace tmerr
