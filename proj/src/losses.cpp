#include "tmerr/losses.hpp"

#include <cmath>
#include <numbers>

#include "tmerr/errors.hpp"
#include "tmerr/quadrature.hpp"

namespace tmerr {

namespace {

// Sufficient statistics of the d measurement rows:
// sum_j (y_j - c)^2 = scatter + d (ybar - c)^2 per component.
struct NoiseStats {
  Vector center;  // ybar - noise mean
  Vector scatter;
  Vector var;
  double d = 0.0;
  double log_norm = 0.0;

  explicit NoiseStats(const InverseProblem& p) : center(p.obs.row_mean()), scatter(p.obs.row_scatter()) {
    d = static_cast<double>(p.obs.count());
    var.resize(center.size());
    for (std::size_t k = 0; k < center.size(); ++k) {
      center[k] -= p.noise.mean[k];
      var[k] = p.noise.std[k] * p.noise.std[k];
      log_norm -= d * (std::log(p.noise.std[k]) + 0.5 * std::log(2.0 * std::numbers::pi));
    }
  }

  // phi given f(T(x)) and eps; writes d phi / d f into dphi_df when nonempty.
  double phi(std::span<const double> fx, std::span<const double> eps, std::span<double> dphi_df) const {
    double v = log_norm;
    for (std::size_t k = 0; k < center.size(); ++k) {
      const double r = center[k] - fx[k] - (eps.empty() ? 0.0 : eps[k]);
      v -= (scatter[k] + d * r * r) / (2.0 * var[k]);
      if (!dphi_df.empty()) dphi_df[k] = d * r / var[k];
    }
    return v;
  }
};

enum class Inner { LogMeanExp, Mean };

// Shared kernel: (1/n) sum_i [ -inner_j(phi_ij) - ln pi_X(T(x_i)) - logdet_i ].
LossValue accumulate(const TriangularMap& T, const SampleBatch& x_batch, std::size_t n, std::size_t m,
                     const ErrorSampleBank* bank, const ForwardModel& model, const InverseProblem& problem,
                     Inner inner) {
  if (x_batch.size() != n) {
    throw ContractViolation("loss: x batch has " + std::to_string(x_batch.size()) + " rows, expected " +
                            std::to_string(n));
  }
  if (m == 0) throw ContractViolation("loss: inner sample count m must be >= 1");
  if (x_batch.dim() != T.dim()) throw ContractViolation("loss: x batch dimension does not match the map");
  const NoiseStats stats(problem);
  const std::size_t dy = problem.obs.dim();
  const std::size_t dx = T.dim();
  const std::size_t P = T.num_params();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double ln_m = std::log(static_cast<double>(m));

  LossValue out;
  out.grad.assign(P, 0.0);
  out.n_used = n;
  out.m_used = m;

  Vector fx(dy), jac(dy * dx), dphi_df(dy);
  Vector phis(m);
  Matrix dphi_dy(m, dx);
  Vector upstream_y(dx);
  for (std::size_t i = 0; i < n; ++i) {
    const MapSensitivity s = T.forward_with_sensitivity(x_batch.points.row(i));
    for (std::size_t j = 0; j < m; ++j) {
      model.evaluate_with_jacobian(s.eval.y, fx, jac);
      const std::span<const double> eps = bank ? bank->at(i, j) : std::span<const double>();
      phis[j] = stats.phi(fx, eps, dphi_df);
      for (std::size_t l = 0; l < dx; ++l) {
        double g = 0.0;
        for (std::size_t k = 0; k < dy; ++k) g += dphi_df[k] * jac[k * dx + l];
        dphi_dy(j, l) = g;
      }
    }

    double inner_value = 0.0;
    std::fill(upstream_y.begin(), upstream_y.end(), 0.0);
    if (inner == Inner::LogMeanExp) {
      const double lse = logsumexp(phis);
      inner_value = lse - ln_m;
      for (std::size_t j = 0; j < m; ++j) {
        const double w = std::exp(phis[j] - lse);
        for (std::size_t l = 0; l < dx; ++l) upstream_y[l] += w * dphi_dy(j, l);
      }
    } else {
      const double inv_m = 1.0 / static_cast<double>(m);
      for (std::size_t j = 0; j < m; ++j) {
        inner_value += phis[j] * inv_m;
        for (std::size_t l = 0; l < dx; ++l) upstream_y[l] += inv_m * dphi_dy(j, l);
      }
    }

    const double prior_term = -log_pdf_uniform_box(s.eval.y, problem.prior);
    out.value += inv_n * (-inner_value + prior_term - s.eval.logdet);
    for (std::size_t p = 0; p < P; ++p) {
      double g = -s.dlogdet_dtheta[p];
      for (std::size_t l = 0; l < dx; ++l) g -= upstream_y[l] * s.dy_dtheta(l, p);
      out.grad[p] += inv_n * g;
    }
  }
  return out;
}

void check_bank(const ErrorSampleBank& bank, const InverseProblem& problem) {
  if (bank.eps.cols() != problem.obs.dim()) throw ContractViolation("loss: bank width does not match data");
  if (bank.n * bank.m != bank.size()) throw ContractViolation("loss: bank layout does not match its size");
}

}  // namespace

ErrorSampleBank ErrorSampleBank::zeros(BankLayout layout, std::size_t n, std::size_t m, std::size_t dim_y) {
  if (layout == BankLayout::Flat && m != 1) throw ContractViolation("flat bank must have m == 1");
  ErrorSampleBank b;
  b.eps = Matrix(n * m, dim_y);
  b.layout = layout;
  b.n = n;
  b.m = m;
  return b;
}

NestedSplit nested_split(std::size_t s, std::size_t m_override) {
  if (s == 0) throw ContractViolation("nested_split: budget must be >= 1");
  std::size_t m = m_override;
  if (m == 0) {
    m = static_cast<std::size_t>(std::ceil(std::cbrt(static_cast<double>(s))));
    // Guard cbrt round-off on perfect cubes.
    while (m > 1 && (m - 1) * (m - 1) * (m - 1) >= s) --m;
    while (m * m * m < s) ++m;
  }
  if (m > s) throw ContractViolation("nested_split: m exceeds the budget");
  return {s / m, m};
}

double potential_phi(const TriangularMap& T, std::span<const double> x, std::span<const double> eps_row,
                     const InverseProblem& problem) {
  if (eps_row.size() != problem.obs.dim()) throw ContractViolation("potential_phi: eps has the wrong dimension");
  const MapEvaluation e = T.forward(x);
  const Vector fx = problem.reduced.evaluate(e.y);
  return NoiseStats(problem).phi(fx, eps_row, {});
}

LossValue jensen_loss(const TriangularMap& T, const ErrorSampleBank& bank, const SampleBatch& x_batch,
                      const InverseProblem& problem) {
  check_bank(bank, problem);
  return accumulate(T, x_batch, bank.n, bank.m, &bank, problem.reduced, problem, Inner::Mean);
}

LossValue nmc_loss(const TriangularMap& T, const ErrorSampleBank& bank, const SampleBatch& x_batch,
                   const InverseProblem& problem) {
  check_bank(bank, problem);
  return accumulate(T, x_batch, bank.n, bank.m, &bank, problem.reduced, problem, Inner::LogMeanExp);
}

LossValue direct_loss(const TriangularMap& T, const ForwardModel& model, const SampleBatch& x_batch,
                      const InverseProblem& problem) {
  return accumulate(T, x_batch, x_batch.size(), 1, nullptr, model, problem, Inner::Mean);
}

double exact_loss_quadrature(const TriangularMap& T, const TriangularMap& Tstar, const InverseProblem& problem,
                             std::size_t nodes) {
  const std::size_t dim = T.dim();
  if (dim > 2 || Tstar.dim() != dim) throw ContractViolation("exact_loss_quadrature: supports dim <= 2 only");
  const QuadratureRule gh = gauss_hermite_normal(nodes);
  const std::size_t total = dim == 1 ? nodes : nodes * nodes;
  auto node = [&](std::size_t idx, Vector& pt) -> double {
    if (dim == 1) {
      pt[0] = gh.nodes[idx];
      return gh.weights[idx];
    }
    pt[0] = gh.nodes[idx / nodes];
    pt[1] = gh.nodes[idx % nodes];
    return gh.weights[idx / nodes] * gh.weights[idx % nodes];
  };

  const ForwardModel exact = problem.exact.with_ledger(nullptr);
  const ForwardModel reduced = problem.reduced.with_ledger(nullptr);
  const NoiseStats stats(problem);

  Matrix eps(total, problem.obs.dim());
  Vector log_wz(total);
  Vector pt(dim);
  for (std::size_t q = 0; q < total; ++q) {
    log_wz[q] = std::log(node(q, pt));
    const Vector e = model_error(exact, reduced, Tstar.forward(pt).y);
    std::copy(e.begin(), e.end(), eps.row(q).begin());
  }

  double loss = 0.0;
  Vector terms(total);
  for (std::size_t a = 0; a < total; ++a) {
    const double wx = node(a, pt);
    const MapEvaluation ev = T.forward(pt);
    const Vector fx = reduced.evaluate(ev.y);
    for (std::size_t q = 0; q < total; ++q) terms[q] = log_wz[q] + stats.phi(fx, eps.row(q), {});
    loss += wx * (-logsumexp(terms) - log_pdf_uniform_box(ev.y, problem.prior) - ev.logdet);
  }
  return loss;
}

}  // namespace tmerr
