#include "tmerr/forward_models.hpp"

#include <cmath>
#include <utility>

#include "tmerr/errors.hpp"

namespace tmerr {

CostSnapshot CostLedger::snapshot() const noexcept {
  CostSnapshot s;
  s.g_plus = g_plus_.load(std::memory_order_acquire);
  s.g_minus = g_minus_.load(std::memory_order_acquire);
  s.optimizer_steps = steps_.load(std::memory_order_acquire);
  s.posterior_samples_drawn = samples_.load(std::memory_order_acquire);
  return s;
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::AffineExact: return "affine-exact";
    case ModelKind::AffineReduced: return "affine-reduced";
    case ModelKind::MachineExact: return "machine-exact";
    case ModelKind::MachineReduced: return "machine-reduced";
  }
  return "unknown";
}

ForwardModel::ForwardModel(ModelKind kind, std::size_t dim, std::shared_ptr<CostLedger> ledger)
    : kind_(kind), dim_(dim), ledger_(std::move(ledger)) {
  if (!ledger_) ledger_ = std::make_shared<CostLedger>();
}

ForwardModel ForwardModel::affine_exact(std::array<double, 4> A, std::array<double, 2> c,
                                        std::shared_ptr<CostLedger> ledger) {
  ForwardModel m(ModelKind::AffineExact, 2, std::move(ledger));
  m.A_ = A;
  m.c_ = c;
  return m;
}

ForwardModel ForwardModel::affine_reduced(std::shared_ptr<CostLedger> ledger) {
  return ForwardModel(ModelKind::AffineReduced, 2, std::move(ledger));
}

ForwardModel ForwardModel::machine_exact(double a, std::shared_ptr<CostLedger> ledger) {
  ForwardModel m(ModelKind::MachineExact, 1, std::move(ledger));
  m.a_ = a;
  return m;
}

ForwardModel ForwardModel::machine_reduced(std::shared_ptr<CostLedger> ledger) {
  return ForwardModel(ModelKind::MachineReduced, 1, std::move(ledger));
}

bool ForwardModel::componentwise() const noexcept {
  if (kind_ == ModelKind::AffineExact) return A_[1] == 0.0 && A_[2] == 0.0;
  return true;
}

ForwardModel ForwardModel::with_ledger(std::shared_ptr<CostLedger> ledger) const {
  ForwardModel m = *this;
  m.ledger_ = ledger ? std::move(ledger) : std::make_shared<CostLedger>();
  return m;
}

void ForwardModel::count() const noexcept {
  if (is_exact()) {
    ledger_->add_exact();
  } else {
    ledger_->add_reduced();
  }
}

void ForwardModel::compute(std::span<const double> x, std::span<double> out,
                           std::span<double> jac) const {
  if (x.size() != dim_) {
    throw ContractViolation(to_string(kind_) + ": expected input of dim " + std::to_string(dim_) +
                            ", got " + std::to_string(x.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw DomainError(to_string(kind_) + ": non-finite input");
  }
  switch (kind_) {
    case ModelKind::AffineExact:
      out[0] = A_[0] * x[0] + A_[1] * x[1] + c_[0];
      out[1] = A_[2] * x[0] + A_[3] * x[1] + c_[1];
      if (!jac.empty()) std::copy(A_.begin(), A_.end(), jac.begin());
      break;
    case ModelKind::AffineReduced:
      out[0] = x[0];
      out[1] = x[1];
      if (!jac.empty()) {
        jac[0] = 1.0;
        jac[1] = 0.0;
        jac[2] = 0.0;
        jac[3] = 1.0;
      }
      break;
    case ModelKind::MachineExact: {
      const double den = a_ + x[0];
      if (den == 0.0) throw DomainError("machine-exact: pole at x = -a");
      out[0] = 2.0 * a_ * x[0] / den;
      if (!jac.empty()) jac[0] = 2.0 * a_ * a_ / (den * den);
      break;
    }
    case ModelKind::MachineReduced:
      out[0] = 2.0 * x[0];
      if (!jac.empty()) jac[0] = 2.0;
      break;
  }
}

Vector ForwardModel::evaluate(std::span<const double> x) const {
  Vector out(dim_);
  compute(x, out, {});
  count();
  return out;
}

void ForwardModel::evaluate_with_jacobian(std::span<const double> x, std::span<double> out,
                                          std::span<double> jac) const {
  if (out.size() != dim_ || jac.size() != dim_ * dim_) {
    throw ContractViolation(to_string(kind_) + ": output buffers have the wrong size");
  }
  compute(x, out, jac);
  count();
}

Vector model_error(const ForwardModel& exact, const ForwardModel& reduced, std::span<const double> x) {
  if (exact.dim() != reduced.dim()) throw ContractViolation("model_error: model dimensions differ");
  Vector e = exact.evaluate(x);
  const Vector r = reduced.evaluate(x);
  for (std::size_t k = 0; k < e.size(); ++k) e[k] -= r[k];
  return e;
}

Vector Observation::row_mean() const {
  Vector m(dim(), 0.0);
  for (std::size_t j = 0; j < count(); ++j) {
    for (std::size_t k = 0; k < dim(); ++k) m[k] += y(j, k);
  }
  for (double& v : m) v /= static_cast<double>(count());
  return m;
}

Vector Observation::row_scatter() const {
  const Vector m = row_mean();
  Vector s(dim(), 0.0);
  for (std::size_t j = 0; j < count(); ++j) {
    for (std::size_t k = 0; k < dim(); ++k) {
      const double r = y(j, k) - m[k];
      s[k] += r * r;
    }
  }
  return s;
}

Observation generate_synthetic(const ForwardModel& exact, std::span<const double> x_star,
                               std::size_t d, double noise_level, RngStream& stream,
                               bool zero_noise) {
  if (d == 0) throw ConfigError("generate_synthetic: d must be >= 1");
  if (!(noise_level > 0.0) || !std::isfinite(noise_level)) {
    throw ConfigError("generate_synthetic: noise_level must be positive");
  }
  const Vector clean = exact.evaluate(x_star);
  Observation obs;
  obs.x_star.assign(x_star.begin(), x_star.end());
  obs.noise_std.resize(clean.size());
  for (std::size_t k = 0; k < clean.size(); ++k) {
    obs.noise_std[k] = noise_level * std::abs(clean[k]);
    if (!(obs.noise_std[k] > 0.0)) {
      throw ConfigError("generate_synthetic: F(x*) has a zero component " + std::to_string(k) +
                        ", noise std would be degenerate");
    }
  }
  obs.seed_tag = stream.key();
  obs.y = Matrix(d, clean.size());
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < clean.size(); ++k) {
      const double eta = stream.normal() * obs.noise_std[k];
      obs.y(j, k) = clean[k] + (zero_noise ? 0.0 : eta);
    }
  }
  return obs;
}

namespace {

InverseProblem assemble(ForwardModel exact, ForwardModel reduced, UniformBox prior,
                        const ProblemSetup& setup) {
  auto ledger = exact.ledger();
  if (setup.x_star.size() != prior.dim()) {
    throw ConfigError("x_star has dim " + std::to_string(setup.x_star.size()) + ", problem has dim " +
                      std::to_string(prior.dim()));
  }
  // Measurement generation is not part of the inference cost, so it runs on its own ledger.
  RngStream noise_stream = RngStream::named(setup.seed, "noise");
  Observation obs = generate_synthetic(exact.with_ledger(nullptr), setup.x_star, setup.d, setup.noise_level, noise_stream,
                                       setup.zero_noise);
  GaussianDiag noise(Vector(obs.dim(), 0.0), obs.noise_std);
  return InverseProblem{std::move(ledger), std::move(exact), std::move(reduced), std::move(prior),
                        std::move(obs), std::move(noise)};
}

}  // namespace

InverseProblem make_affine_problem(const ProblemSetup& setup) {
  auto ledger = std::make_shared<CostLedger>();
  UniformBox prior = setup.prior.dim() == 0 ? UniformBox({0.0, 0.0}, {15.0, 15.0}) : setup.prior;
  return assemble(ForwardModel::affine_exact({2.0, 0.0, 0.0, 3.0}, {5.0, 5.0}, ledger),
                  ForwardModel::affine_reduced(ledger), std::move(prior), setup);
}

InverseProblem make_machine_problem(const ProblemSetup& setup, double a) {
  auto ledger = std::make_shared<CostLedger>();
  UniformBox prior = setup.prior.dim() == 0 ? UniformBox({0.0}, {15.0}) : setup.prior;
  return assemble(ForwardModel::machine_exact(a, ledger), ForwardModel::machine_reduced(ledger),
                  std::move(prior), setup);
}

}  // namespace tmerr
