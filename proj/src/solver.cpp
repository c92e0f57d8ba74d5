#include "tmerr/solver.hpp"

#include <chrono>
#include <cmath>

#include "tmerr/errors.hpp"

namespace tmerr {

void OptimizerState::step(Vector& theta, const Vector& grad) {
  if (grad.size() != theta.size() || m.size() != theta.size()) {
    throw ContractViolation("OptimizerState::step: parameter and gradient sizes differ");
  }
  ++step_count;
  const double t = static_cast<double>(step_count);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t p = 0; p < theta.size(); ++p) {
    m[p] = options.beta1 * m[p] + (1.0 - options.beta1) * grad[p];
    v[p] = options.beta2 * v[p] + (1.0 - options.beta2) * grad[p] * grad[p];
    theta[p] -= options.step_size * (m[p] / c1) / (std::sqrt(v[p] / c2) + options.eps);
  }
}

namespace {

void check_finite(const LossValue& lv, std::size_t step) {
  bool ok = std::isfinite(lv.value);
  for (double g : lv.grad) ok = ok && std::isfinite(g);
  if (!ok) throw NumericError("non-finite loss or gradient at optimizer step " + std::to_string(step), step);
}

// Evaluates the loss at T, takes one Adam step, returns the loss value.
double adam_step(TriangularMap& T, OptimizerState& opt, const LossValue& lv, std::size_t step) {
  check_finite(lv, step);
  Vector theta = T.theta();
  opt.step(theta, lv.grad);
  for (double v : theta) {
    if (!std::isfinite(v)) throw NumericError("non-finite parameters after step " + std::to_string(step), step);
  }
  T.set_theta(std::move(theta));
  return lv.value;
}

class Recorder {
 public:
  Recorder(const SolverConfig& cfg, const InverseProblem& problem, const SolverHooks& hooks)
      : cfg_(cfg), problem_(problem), hooks_(hooks), start_(std::chrono::steady_clock::now()) {}

  void record(std::size_t iter, double loss, const TriangularMap& T) {
    IterationRecord r;
    r.iter = iter;
    r.loss = loss;
    r.cost = problem_.ledger_snapshot();
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    trace.records.push_back(r);
    if (hooks_.on_step) hooks_.on_step(r, T);
  }

  // Delta test on the last two records.
  bool converged() const {
    const std::size_t n = trace.records.size();
    if (n < 2 || n < cfg_.min_iterations) return false;
    return std::abs(trace.records[n - 1].loss - trace.records[n - 2].loss) <= cfg_.delta;
  }

  IterationTrace trace;

 private:
  const SolverConfig& cfg_;
  const InverseProblem& problem_;
  const SolverHooks& hooks_;
  std::chrono::steady_clock::time_point start_;
};

void validate(const SolverConfig& cfg) {
  if (cfg.s == 0) throw ConfigError("solver: s must be >= 1");
  if (cfg.max_iterations == 0) throw ConfigError("solver: max_iterations must be >= 1");
  if (!(cfg.delta >= 0.0)) throw ConfigError("solver: delta must be >= 0");
  if (!(cfg.adam.step_size > 0.0)) throw ConfigError("solver: step_size must be positive");
  if (cfg.algorithm == Algorithm::IterativeMod && (cfg.L_mod == 0 || cfg.N_mod == 0)) {
    throw ConfigError("solver: L_mod and N_mod must be >= 1");
  }
}

TriangularMap initial_map(const SolverConfig& cfg, const InverseProblem& problem) {
  return TriangularMap::init(problem.dim(), cfg.degree, problem.prior, cfg.init, cfg.seed);
}

SampleBatch reference_batch(std::size_t dim, std::size_t n, RngStream stream) {
  return sample(GaussianDiag::standard(dim), n, stream);
}

struct BankShape {
  BankLayout layout;
  std::size_t n;
  std::size_t m;
};

BankShape bank_shape(const SolverConfig& cfg) {
  if (cfg.loss == LossKind::Jensen) return {BankLayout::Flat, cfg.s, 1};
  const NestedSplit sp = nested_split(cfg.s, cfg.m_override);
  return {BankLayout::Nested, sp.n, sp.m};
}

LossValue bank_loss(const SolverConfig& cfg, const TriangularMap& T, const ErrorSampleBank& bank,
                    const SampleBatch& x, const InverseProblem& problem) {
  return cfg.loss == LossKind::Jensen ? jensen_loss(T, bank, x, problem) : nmc_loss(T, bank, x, problem);
}

SolverResult run_direct(const SolverConfig& cfg, InverseProblem& problem, const SolverHooks& hooks,
                        const ForwardModel& model) {
  validate(cfg);
  TriangularMap T = initial_map(cfg, problem);
  OptimizerState opt(T.num_params(), cfg.adam);
  Recorder rec(cfg, problem, hooks);
  const RngStream xs = RngStream::named(cfg.seed, "x-batch");
  for (std::size_t step = 1; step <= cfg.max_iterations; ++step) {
    if (hooks.before_step) hooks.before_step(step, T);
    const SampleBatch x = reference_batch(problem.dim(), cfg.s, xs.split(step));
    const double loss = adam_step(T, opt, direct_loss(T, model, x, problem), step);
    problem.ledger->add_optimizer_steps();
    rec.record(step, loss, T);
    if (rec.converged()) {
      rec.trace.termination_reason = TerminationReason::DeltaConverged;
      break;
    }
  }
  return {std::move(T), std::move(rec.trace)};
}

}  // namespace

TriangularMap optimize(const LossFn& loss, TriangularMap T0, std::size_t n_steps, OptimizerState& opt) {
  if (n_steps == 0) throw ContractViolation("optimize: n_steps must be >= 1");
  if (opt.m.size() != T0.num_params()) opt = OptimizerState(T0.num_params(), opt.options);
  for (std::size_t step = 0; step < n_steps; ++step) adam_step(T0, opt, loss(T0), step);
  return T0;
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Full: return "full";
    case Algorithm::Reduced: return "reduced";
    case Algorithm::Iterative: return "iterative";
    case Algorithm::IterativeMod: return "iterative_mod";
  }
  return "unknown";
}

std::string to_string(LossKind k) { return k == LossKind::Jensen ? "jensen" : "nmc"; }

std::string to_string(TerminationReason r) {
  return r == TerminationReason::DeltaConverged ? "delta-converged" : "max-iterations";
}

std::size_t bank_size(const SolverConfig& cfg) {
  const BankShape b = bank_shape(cfg);
  return b.n * b.m;
}

ErrorSampleBank refresh_bank(const TriangularMap& T, BankLayout layout, std::size_t n, std::size_t m,
                             RngStream& stream, const InverseProblem& problem, std::size_t producer_tag) {
  ErrorSampleBank bank = ErrorSampleBank::zeros(layout, n, m, problem.obs.dim());
  bank.producer_tag = producer_tag;
  const SampleBatch z = sample(GaussianDiag::standard(T.dim()), n * m, stream);
  for (std::size_t r = 0; r < n * m; ++r) {
    const Vector e = model_error(problem.exact, problem.reduced, T.forward(z.points.row(r)).y);
    std::copy(e.begin(), e.end(), bank.eps.row(r).begin());
  }
  return bank;
}

SolverResult run_full(const SolverConfig& cfg, InverseProblem& problem, const SolverHooks& hooks) {
  return run_direct(cfg, problem, hooks, problem.exact);
}

SolverResult run_reduced(const SolverConfig& cfg, InverseProblem& problem, const SolverHooks& hooks) {
  return run_direct(cfg, problem, hooks, problem.reduced);
}

SolverResult run_iterative(const SolverConfig& cfg, InverseProblem& problem, const SolverHooks& hooks) {
  validate(cfg);
  const BankShape shape = bank_shape(cfg);
  TriangularMap T = initial_map(cfg, problem);
  OptimizerState opt(T.num_params(), cfg.adam);
  Recorder rec(cfg, problem, hooks);
  const RngStream xs = RngStream::named(cfg.seed, "x-batch");
  const RngStream zs = RngStream::named(cfg.seed, "z-batch");
  for (std::size_t step = 1; step <= cfg.max_iterations; ++step) {
    if (hooks.before_step) hooks.before_step(step, T);
    RngStream z = zs.split(step);
    const ErrorSampleBank bank = refresh_bank(T, shape.layout, shape.n, shape.m, z, problem, step - 1);
    const SampleBatch x = reference_batch(problem.dim(), shape.n, xs.split(step));
    const double loss = adam_step(T, opt, bank_loss(cfg, T, bank, x, problem), step);
    problem.ledger->add_optimizer_steps();
    rec.record(step, loss, T);
    if (rec.converged()) {
      rec.trace.termination_reason = TerminationReason::DeltaConverged;
      break;
    }
  }
  return {std::move(T), std::move(rec.trace)};
}

SolverResult run_iterative_mod(const SolverConfig& cfg, InverseProblem& problem, const SolverHooks& hooks) {
  validate(cfg);
  const BankShape shape = bank_shape(cfg);
  TriangularMap T = initial_map(cfg, problem);
  OptimizerState opt(T.num_params(), cfg.adam);
  Recorder rec(cfg, problem, hooks);
  const RngStream xs = RngStream::named(cfg.seed, "x-batch");
  const RngStream zs = RngStream::named(cfg.seed, "z-batch");
  std::size_t step = 0;
  for (std::size_t outer = 1; outer <= cfg.L_mod; ++outer) {
    RngStream z = zs.split(outer);
    const ErrorSampleBank bank = refresh_bank(T, shape.layout, shape.n, shape.m, z, problem, step);
    for (std::size_t k = 1; k <= cfg.N_mod; ++k) {
      ++step;
      if (hooks.before_step) hooks.before_step(step, T);
      const SampleBatch x = reference_batch(problem.dim(), shape.n, xs.split(step));
      const double loss = adam_step(T, opt, bank_loss(cfg, T, bank, x, problem), step);
      problem.ledger->add_optimizer_steps();
      rec.record(step, loss, T);
    }
  }
  rec.trace.termination_reason = TerminationReason::MaxIterations;
  return {std::move(T), std::move(rec.trace)};
}

SolverResult run_solver(const SolverConfig& cfg, InverseProblem& problem, const SolverHooks& hooks) {
  switch (cfg.algorithm) {
    case Algorithm::Full: return run_full(cfg, problem, hooks);
    case Algorithm::Reduced: return run_reduced(cfg, problem, hooks);
    case Algorithm::Iterative: return run_iterative(cfg, problem, hooks);
    case Algorithm::IterativeMod: return run_iterative_mod(cfg, problem, hooks);
  }
  throw ConfigError("unknown algorithm");
}

SampleBatch sample_posterior(const TriangularMap& T, std::size_t S, RngStream& stream, CostLedger* ledger) {
  if (S == 0) throw ContractViolation("sample_posterior: S must be >= 1");
  SampleBatch out;
  out.seed_tag = stream.key();
  out.points = Matrix(S, T.dim());
  Vector z(T.dim());
  for (std::size_t i = 0; i < S; ++i) {
    for (double& v : z) v = stream.normal();
    const MapEvaluation e = T.forward(z);
    std::copy(e.y.begin(), e.y.end(), out.points.row(i).begin());
  }
  if (ledger) ledger->add_posterior_samples(S);
  return out;
}

ExpectedCost expected_cost(const SolverConfig& cfg, std::size_t steps) {
  ExpectedCost c;
  const auto N = static_cast<std::uint64_t>(steps);
  const auto s = static_cast<std::uint64_t>(cfg.s);
  switch (cfg.algorithm) {
    case Algorithm::Full:
      c.g_plus = N * s;
      c.g_plus_formula = "N*s";
      c.g_minus_formula = "0";
      break;
    case Algorithm::Reduced:
      c.g_minus = N * s;
      c.g_plus_formula = "0";
      c.g_minus_formula = "N*s";
      break;
    case Algorithm::Iterative: {
      const auto b = static_cast<std::uint64_t>(bank_size(cfg));
      c.g_plus = N * b;
      c.g_minus = 2 * N * b;
      c.g_plus_formula = "N*s_bank";
      c.g_minus_formula = "2*N*s_bank";
      break;
    }
    case Algorithm::IterativeMod: {
      const auto b = static_cast<std::uint64_t>(bank_size(cfg));
      const auto L = static_cast<std::uint64_t>(cfg.L_mod);
      const auto K = static_cast<std::uint64_t>(cfg.N_mod);
      c.g_plus = L * b;
      c.g_minus = L * b + L * K * b;
      c.g_plus_formula = "L_mod*s_bank";
      c.g_minus_formula = "L_mod*s_bank+L_mod*N_mod*s_bank";
      break;
    }
  }
  return c;
}

}  // namespace tmerr
