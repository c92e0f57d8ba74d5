#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tmerr/forward_models.hpp"
#include "tmerr/prob_core.hpp"

namespace tmerr {

/// Log-density on a tensor grid, normalized so the trapezoid integral is 1.
/// Values are stored row-major with the last axis fastest.
struct GridDensity {
  std::vector<Vector> axes;
  Vector logp;

  std::size_t dim() const noexcept { return axes.size(); }
  std::size_t size() const noexcept { return logp.size(); }
  /// Tensor trapezoid weight of flat index `idx`.
  double weight(std::size_t idx) const;
  /// Grid point of flat index `idx`.
  Vector point(std::size_t idx) const;
  /// Normalize in place; throws ConfigError when every value is -inf.
  void normalize();

  /// Build from raw (unnormalized) log values.
  static GridDensity from_log_values(std::vector<Vector> axes, Vector logp);
};

/// Equispaced axes over the box, endpoints included.
std::vector<Vector> box_axes(const UniformBox& box, std::size_t resolution);

/// Plain Bayes posterior of `model` on the grid.
GridDensity grid_posterior(const ForwardModel& model, const UniformBox& prior, const GaussianDiag& noise,
                           const Observation& obs, std::size_t resolution = 256);

struct FixedPointOptions {
  std::size_t resolution = 256;
  std::size_t max_sweeps = 20000;
  /// Stop when sup |p_new - p| <= tol * sup p.
  double tol = 1e-10;
  /// Allow the separable matrix-product route when both models are componentwise.
  bool allow_fast = true;
};

struct FixedPointResult {
  GridDensity density;
  std::size_t sweeps = 0;
  double residual = 0.0;
  bool used_fast_path = false;
};

/// Solves p(x) ∝ pi_X(x) ∫ pi_eta(y - f(x) - M(z)) p(z) dz on the grid with
/// M = F - f, starting from the reduced-model posterior. Models are evaluated
/// on private ledgers. Passing F == f gives M ≡ 0.
FixedPointResult grid_fixed_point(const ForwardModel& f, const ForwardModel& F, const UniformBox& prior,
                                  const GaussianDiag& noise, const Observation& obs,
                                  const FixedPointOptions& opts = {});

/// x -> ln ∫ pi_eta(y - f(x) - M(z)) p(z) dz with the integral over the grid of `p`.
std::function<double(std::span<const double>)> integrated_log_likelihood(const GridDensity& p,
                                                                         const ForwardModel& f,
                                                                         const ForwardModel& F,
                                                                         const GaussianDiag& noise,
                                                                         const Observation& obs);

/// ln pi_X(x) + sum_j ln pi_eta(y_j - model(x)); one model evaluation per call.
std::function<double(std::span<const double>)> log_posterior(const ForwardModel& model, const UniformBox& prior,
                                                             const GaussianDiag& noise, const Observation& obs);

struct MhResult {
  SampleBatch samples;
  double acceptance_rate = 0.0;
  /// Proposals whose log density was -inf (rejected without a finite evaluation).
  std::size_t rejected_outside = 0;
  std::vector<std::string> warnings;
};

/// Random-walk Metropolis with Gaussian proposals.
MhResult mh_sample(const std::function<double(std::span<const double>)>& logpost, Vector x0,
                   std::size_t n_samples, std::size_t n_burn, const Vector& proposal_std, RngStream& stream);

/// 5% of the box width per axis.
Vector default_proposal_std(const UniformBox& box);

struct PosteriorSummary {
  Vector mean;
  Matrix cov;
  Vector q025, q50, q975;
  /// Standard error of the mean per axis (0 for quadrature).
  Vector mean_se;
  std::string source;
  double n_effective = 0.0;

  Vector stddev() const;
};

PosteriorSummary summarize(const SampleBatch& samples, const std::string& source = "transport",
                           std::size_t n_batches = 50);
PosteriorSummary summarize(const GridDensity& grid);

/// Marginal density of axis k (trapezoid over the other axis), normalized.
Vector marginal(const GridDensity& grid, std::size_t k);

/// Trapezoid ∫ p ln(p/q); cells with p < 1e-300 contribute 0.
double kl_grid(const GridDensity& p, const GridDensity& q);

/// Header "x1[,x2],logp", one row per grid point, 17 significant digits.
void write_grid_csv(std::ostream& os, const GridDensity& grid);

}  // namespace tmerr
