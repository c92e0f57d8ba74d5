#include "tmerr/oracles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "tmerr/errors.hpp"

namespace tmerr {

namespace {

double axis_weight(const Vector& axis, std::size_t i) {
  const double h = axis[1] - axis[0];
  return (i == 0 || i + 1 == axis.size()) ? 0.5 * h : h;
}

// Per-component Gaussian log-likelihood of d rows given the prediction
// fx + eps, from the row mean and scatter.
struct RowLikelihood {
  Vector center, scatter, var;
  double d = 0.0;
  double log_norm = 0.0;

  RowLikelihood(const GaussianDiag& noise, const Observation& obs)
      : center(obs.row_mean()), scatter(obs.row_scatter()) {
    if (noise.dim() != obs.dim()) throw ContractViolation("oracle: noise and data dimensions differ");
    d = static_cast<double>(obs.count());
    var.resize(center.size());
    for (std::size_t k = 0; k < center.size(); ++k) {
      center[k] -= noise.mean[k];
      var[k] = noise.std[k] * noise.std[k];
      log_norm -= d * (std::log(noise.std[k]) + 0.5 * std::log(2.0 * std::numbers::pi));
    }
  }

  double component(std::size_t k, double fx, double eps) const {
    const double r = center[k] - fx - eps;
    return -(scatter[k] + d * r * r) / (2.0 * var[k]);
  }

  double total(std::span<const double> fx, std::span<const double> eps) const {
    double v = log_norm;
    for (std::size_t k = 0; k < center.size(); ++k) v += component(k, fx[k], eps.empty() ? 0.0 : eps[k]);
    return v;
  }
};

void check_grid_dim(std::size_t dim) {
  if (dim == 0 || dim > 2) throw ContractViolation("grid oracle: dimension must be 1 or 2");
}

Matrix evaluate_on_grid(const ForwardModel& model, const GridDensity& grid) {
  const ForwardModel priv = model.with_ledger(nullptr);
  Matrix out(grid.size(), model.dim());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vector v = priv.evaluate(grid.point(i));
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

double sup_relative_change(const Vector& logp_old, const Vector& logp_new) {
  double diff = 0.0;
  double peak = 0.0;
  for (std::size_t i = 0; i < logp_new.size(); ++i) {
    const double a = std::exp(logp_old[i]);
    const double b = std::exp(logp_new[i]);
    diff = std::max(diff, std::abs(a - b));
    peak = std::max(peak, b);
  }
  return peak > 0.0 ? diff / peak : diff;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double GridDensity::weight(std::size_t idx) const {
  if (dim() == 1) return axis_weight(axes[0], idx);
  const std::size_t n1 = axes[1].size();
  return axis_weight(axes[0], idx / n1) * axis_weight(axes[1], idx % n1);
}

Vector GridDensity::point(std::size_t idx) const {
  if (dim() == 1) return {axes[0][idx]};
  const std::size_t n1 = axes[1].size();
  return {axes[0][idx / n1], axes[1][idx % n1]};
}

void GridDensity::normalize() {
  Vector terms(logp.size());
  for (std::size_t i = 0; i < logp.size(); ++i) terms[i] = logp[i] + std::log(weight(i));
  const double logZ = logsumexp(terms);
  if (!std::isfinite(logZ)) throw ConfigError("grid density: every grid value is zero (-inf log density)");
  for (double& v : logp) v -= logZ;
}

GridDensity GridDensity::from_log_values(std::vector<Vector> axes, Vector logp) {
  check_grid_dim(axes.size());
  std::size_t n = 1;
  for (const Vector& a : axes) {
    if (a.size() < 2) throw ContractViolation("grid density: each axis needs at least 2 points");
    n *= a.size();
  }
  if (logp.size() != n) throw ContractViolation("grid density: value count does not match axes");
  GridDensity g{std::move(axes), std::move(logp)};
  g.normalize();
  return g;
}

std::vector<Vector> box_axes(const UniformBox& box, std::size_t resolution) {
  if (resolution < 2) throw ContractViolation("box_axes: resolution must be >= 2");
  std::vector<Vector> axes(box.dim(), Vector(resolution));
  for (std::size_t k = 0; k < box.dim(); ++k) {
    const double h = (box.hi[k] - box.lo[k]) / static_cast<double>(resolution - 1);
    for (std::size_t i = 0; i < resolution; ++i) axes[k][i] = box.lo[k] + h * static_cast<double>(i);
    axes[k].back() = box.hi[k];
  }
  return axes;
}

GridDensity grid_posterior(const ForwardModel& model, const UniformBox& prior, const GaussianDiag& noise,
                           const Observation& obs, std::size_t resolution) {
  check_grid_dim(prior.dim());
  if (resolution < 64) throw ContractViolation("grid_posterior: resolution must be >= 64");
  GridDensity g;
  g.axes = box_axes(prior, resolution);
  g.logp.assign(resolution == 0 ? 0 : (prior.dim() == 1 ? resolution : resolution * resolution), 0.0);
  const Matrix fx = evaluate_on_grid(model, g);
  const RowLikelihood lik(noise, obs);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.logp[i] = lik.total(fx.row(i), {}) + log_pdf_uniform_box(g.point(i), prior);
  }
  g.normalize();
  return g;
}

FixedPointResult grid_fixed_point(const ForwardModel& f, const ForwardModel& F, const UniformBox& prior,
                                  const GaussianDiag& noise, const Observation& obs,
                                  const FixedPointOptions& opts) {
  check_grid_dim(prior.dim());
  if (f.dim() != prior.dim() || F.dim() != prior.dim()) {
    throw ContractViolation("grid_fixed_point: model and prior dimensions differ");
  }
  FixedPointResult res;
  res.density = grid_posterior(f, prior, noise, obs, opts.resolution);
  GridDensity& g = res.density;
  const std::size_t dim = prior.dim();
  const std::size_t G = g.size();
  const RowLikelihood lik(noise, obs);

  const Matrix fx = evaluate_on_grid(f, g);
  Matrix Mz = evaluate_on_grid(F, g);
  for (std::size_t i = 0; i < G; ++i) {
    for (std::size_t k = 0; k < dim; ++k) Mz(i, k) -= fx(i, k);
  }
  Vector log_prior(G), log_w(G);
  for (std::size_t i = 0; i < G; ++i) {
    log_prior[i] = log_pdf_uniform_box(g.point(i), prior);
    log_w[i] = std::log(g.weight(i));
  }

  const bool fast = opts.allow_fast && f.componentwise() && F.componentwise();
  res.used_fast_path = fast;

  // Separable route: kernel_k(a, z) = exp(e_k(a, z) - rowmax_k(a)) per axis,
  // where a and z index the axis-k grid and the other coordinates do not enter.
  std::vector<Eigen::MatrixXd> kernel(dim);
  std::vector<Vector> rowmax(dim);
  std::vector<Vector> axis_fx(dim), axis_M(dim);
  if (fast) {
    const std::size_t n1 = dim == 2 ? g.axes[1].size() : 1;
    for (std::size_t k = 0; k < dim; ++k) {
      const std::size_t n = g.axes[k].size();
      axis_fx[k].resize(n);
      axis_M[k].resize(n);
      for (std::size_t a = 0; a < n; ++a) {
        // Any grid point with coordinate k at index a; componentwise models ignore the rest.
        const std::size_t idx = dim == 1 ? a : (k == 0 ? a * n1 : a);
        axis_fx[k][a] = fx(idx, k);
        axis_M[k][a] = Mz(idx, k);
      }
      kernel[k].resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      rowmax[k].assign(n, kNegInf);
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t z = 0; z < n; ++z) rowmax[k][a] = std::max(rowmax[k][a], lik.component(k, axis_fx[k][a], axis_M[k][z]));
        for (std::size_t z = 0; z < n; ++z) {
          kernel[k](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(z)) =
              std::exp(lik.component(k, axis_fx[k][a], axis_M[k][z]) - rowmax[k][a]);
        }
      }
    }
  }

  auto general_sweep = [&](const Vector& logp) {
    Vector logq(G);
    for (std::size_t z = 0; z < G; ++z) logq[z] = logp[z] + log_w[z];
    Vector out(G);
    Vector terms(G);
    for (std::size_t x = 0; x < G; ++x) {
      for (std::size_t z = 0; z < G; ++z) terms[z] = lik.total(fx.row(x), Mz.row(z)) + logq[z];
      out[x] = log_prior[x] + logsumexp(terms);
    }
    return out;
  };

  auto fast_sweep = [&](const Vector& logp, bool& ok) {
    Vector q(G);
    for (std::size_t z = 0; z < G; ++z) q[z] = std::exp(logp[z] + log_w[z]);
    Vector out(G);
    if (dim == 1) {
      const Eigen::Map<const Eigen::VectorXd> qv(q.data(), static_cast<Eigen::Index>(G));
      const Eigen::VectorXd v = kernel[0] * qv;
      for (std::size_t a = 0; a < G; ++a) out[a] = std::log(v(static_cast<Eigen::Index>(a))) + rowmax[0][a];
    } else {
      const auto n0 = static_cast<Eigen::Index>(g.axes[0].size());
      const auto n1 = static_cast<Eigen::Index>(g.axes[1].size());
      using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
      const Eigen::Map<const RowMat> Q(q.data(), n0, n1);
      const Eigen::MatrixXd V = (kernel[0] * Q) * kernel[1].transpose();
      for (Eigen::Index a = 0; a < n0; ++a) {
        for (Eigen::Index b = 0; b < n1; ++b) {
          out[static_cast<std::size_t>(a * n1 + b)] = std::log(V(a, b)) + rowmax[0][static_cast<std::size_t>(a)] +
                                                      rowmax[1][static_cast<std::size_t>(b)];
        }
      }
    }
    ok = false;
    for (std::size_t i = 0; i < G; ++i) {
      out[i] += log_prior[i];
      if (std::isfinite(out[i])) ok = true;
      if (std::isnan(out[i])) {
        ok = false;
        break;
      }
    }
    return out;
  };

  for (std::size_t sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    Vector next;
    bool ok = false;
    if (fast) next = fast_sweep(g.logp, ok);
    if (!ok) next = general_sweep(g.logp);
    GridDensity cand{g.axes, std::move(next)};
    cand.normalize();
    res.residual = sup_relative_change(g.logp, cand.logp);
    g.logp = std::move(cand.logp);
    res.sweeps = sweep;
    if (res.residual <= opts.tol) return res;
  }
  throw NumericError("grid_fixed_point: no convergence after " + std::to_string(opts.max_sweeps) +
                         " sweeps, last residual " + fmt17(res.residual),
                     opts.max_sweeps);
}

std::function<double(std::span<const double>)> integrated_log_likelihood(const GridDensity& p,
                                                                         const ForwardModel& f,
                                                                         const ForwardModel& F,
                                                                         const GaussianDiag& noise,
                                                                         const Observation& obs) {
  const RowLikelihood lik(noise, obs);
  const Matrix fz = evaluate_on_grid(f, p);
  const Matrix Fz = evaluate_on_grid(F, p);
  double top = kNegInf;
  for (std::size_t z = 0; z < p.size(); ++z) top = std::max(top, p.logp[z] + std::log(p.weight(z)));
  // Drop grid mass below exp(-60) of the peak; it cannot move the sum.
  Matrix eps(0, 0);
  std::vector<double> logq;
  std::vector<Vector> kept;
  for (std::size_t z = 0; z < p.size(); ++z) {
    const double lq = p.logp[z] + std::log(p.weight(z));
    if (lq < top - 60.0) continue;
    Vector e(fz.cols());
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = Fz(z, k) - fz(z, k);
    kept.push_back(std::move(e));
    logq.push_back(lq);
  }
  const ForwardModel model = f;
  return [lik, kept, logq, model](std::span<const double> x) {
    const Vector fx = model.evaluate(x);
    Vector terms(kept.size());
    for (std::size_t z = 0; z < kept.size(); ++z) terms[z] = lik.total(fx, kept[z]) + logq[z];
    return logsumexp(terms);
  };
}

std::function<double(std::span<const double>)> log_posterior(const ForwardModel& model, const UniformBox& prior,
                                                             const GaussianDiag& noise, const Observation& obs) {
  const RowLikelihood lik(noise, obs);
  return [lik, model, prior](std::span<const double> x) {
    const double lp = log_pdf_uniform_box(x, prior);
    if (!std::isfinite(lp)) return kNegInf;
    return lp + lik.total(model.evaluate(x), {});
  };
}

MhResult mh_sample(const std::function<double(std::span<const double>)>& logpost, Vector x0,
                   std::size_t n_samples, std::size_t n_burn, const Vector& proposal_std, RngStream& stream) {
  if (n_samples == 0) throw ContractViolation("mh_sample: n_samples must be >= 1");
  if (proposal_std.size() != x0.size()) throw ContractViolation("mh_sample: proposal_std has the wrong dimension");
  double lp = logpost(x0);
  if (!std::isfinite(lp)) throw ContractViolation("mh_sample: log posterior at x0 is not finite");
  MhResult out;
  out.samples.seed_tag = stream.key();
  out.samples.points = Matrix(n_samples, x0.size());
  Vector x = std::move(x0);
  Vector prop(x.size());
  std::size_t accepted = 0;
  const std::size_t total = n_burn + n_samples;
  for (std::size_t it = 0; it < total; ++it) {
    for (std::size_t k = 0; k < x.size(); ++k) prop[k] = x[k] + proposal_std[k] * stream.normal();
    const double lp_prop = logpost(prop);
    const double u = stream.uniform();
    if (!std::isfinite(lp_prop)) ++out.rejected_outside;
    if (std::isfinite(lp_prop) && std::log(u) < lp_prop - lp) {
      x.swap(prop);
      lp = lp_prop;
      ++accepted;
    }
    if (it >= n_burn) std::copy(x.begin(), x.end(), out.samples.points.row(it - n_burn).begin());
  }
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(total);
  if (out.acceptance_rate < 0.01) {
    out.warnings.push_back("acceptance rate " + fmt17(out.acceptance_rate) + " is below 1%");
  }
  return out;
}

Vector default_proposal_std(const UniformBox& box) {
  Vector s(box.dim());
  for (std::size_t k = 0; k < box.dim(); ++k) s[k] = 0.05 * (box.hi[k] - box.lo[k]);
  return s;
}

Vector PosteriorSummary::stddev() const {
  Vector s(mean.size());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = std::sqrt(std::max(cov(k, k), 0.0));
  return s;
}

namespace {

double quantile_sorted(const Vector& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return sorted[lo] + t * (sorted[hi] - sorted[lo]);
}

double quantile_density(const Vector& axis, const Vector& dens, double p) {
  // Cumulative trapezoid, then linear interpolation inside the crossing cell.
  double acc = 0.0;
  for (std::size_t i = 1; i < axis.size(); ++i) {
    const double cell = 0.5 * (dens[i - 1] + dens[i]) * (axis[i] - axis[i - 1]);
    if (acc + cell >= p && cell > 0.0) return axis[i - 1] + (p - acc) / cell * (axis[i] - axis[i - 1]);
    acc += cell;
  }
  return axis.back();
}

}  // namespace

PosteriorSummary summarize(const SampleBatch& samples, const std::string& source, std::size_t n_batches) {
  const std::size_t n = samples.size();
  const std::size_t dim = samples.dim();
  if (n == 0) throw ContractViolation("summarize: empty sample batch");
  PosteriorSummary s;
  s.source = source;
  s.mean.assign(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < dim; ++k) s.mean[k] += samples.points(i, k);
  }
  for (double& v : s.mean) v /= static_cast<double>(n);
  s.cov = Matrix(dim, dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < dim; ++a) {
      for (std::size_t b = 0; b < dim; ++b) {
        s.cov(a, b) += (samples.points(i, a) - s.mean[a]) * (samples.points(i, b) - s.mean[b]);
      }
    }
  }
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  for (double& v : s.cov.data()) v /= denom;

  s.q025.resize(dim);
  s.q50.resize(dim);
  s.q975.resize(dim);
  Vector col(n);
  for (std::size_t k = 0; k < dim; ++k) {
    for (std::size_t i = 0; i < n; ++i) col[i] = samples.points(i, k);
    std::sort(col.begin(), col.end());
    s.q025[k] = quantile_sorted(col, 0.025);
    s.q50[k] = quantile_sorted(col, 0.5);
    s.q975[k] = quantile_sorted(col, 0.975);
  }

  // Batch means standard error.
  s.mean_se.assign(dim, 0.0);
  const std::size_t B = std::min(n_batches, n);
  const std::size_t len = n / std::max<std::size_t>(B, 1);
  s.n_effective = static_cast<double>(n);
  if (B >= 2 && len >= 1) {
    for (std::size_t k = 0; k < dim; ++k) {
      Vector bm(B, 0.0);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = b * len; i < (b + 1) * len; ++i) bm[b] += samples.points(i, k);
        bm[b] /= static_cast<double>(len);
      }
      double mu = 0.0;
      for (double v : bm) mu += v;
      mu /= static_cast<double>(B);
      double var = 0.0;
      for (double v : bm) var += (v - mu) * (v - mu);
      var /= static_cast<double>(B - 1);
      s.mean_se[k] = std::sqrt(var / static_cast<double>(B));
      if (s.mean_se[k] > 0.0) s.n_effective = std::min(s.n_effective, s.cov(k, k) / (s.mean_se[k] * s.mean_se[k]));
    }
  }
  return s;
}

Vector marginal(const GridDensity& grid, std::size_t k) {
  check_grid_dim(grid.dim());
  if (k >= grid.dim()) throw ContractViolation("marginal: axis out of range");
  const std::size_t n = grid.axes[k].size();
  Vector m(n, 0.0);
  if (grid.dim() == 1) {
    for (std::size_t i = 0; i < n; ++i) m[i] = std::exp(grid.logp[i]);
    return m;
  }
  const std::size_t n0 = grid.axes[0].size();
  const std::size_t n1 = grid.axes[1].size();
  for (std::size_t a = 0; a < n0; ++a) {
    for (std::size_t b = 0; b < n1; ++b) {
      const double p = std::exp(grid.logp[a * n1 + b]);
      if (k == 0) {
        m[a] += p * axis_weight(grid.axes[1], b);
      } else {
        m[b] += p * axis_weight(grid.axes[0], a);
      }
    }
  }
  return m;
}

PosteriorSummary summarize(const GridDensity& grid) {
  check_grid_dim(grid.dim());
  const std::size_t dim = grid.dim();
  PosteriorSummary s;
  s.source = "grid";
  s.mean.assign(dim, 0.0);
  s.mean_se.assign(dim, 0.0);
  s.cov = Matrix(dim, dim);
  s.n_effective = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double w = grid.weight(i) * std::exp(grid.logp[i]);
    const Vector x = grid.point(i);
    for (std::size_t k = 0; k < dim; ++k) s.mean[k] += w * x[k];
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double w = grid.weight(i) * std::exp(grid.logp[i]);
    const Vector x = grid.point(i);
    for (std::size_t a = 0; a < dim; ++a) {
      for (std::size_t b = 0; b < dim; ++b) s.cov(a, b) += w * (x[a] - s.mean[a]) * (x[b] - s.mean[b]);
    }
  }
  s.q025.resize(dim);
  s.q50.resize(dim);
  s.q975.resize(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const Vector m = marginal(grid, k);
    s.q025[k] = quantile_density(grid.axes[k], m, 0.025);
    s.q50[k] = quantile_density(grid.axes[k], m, 0.5);
    s.q975[k] = quantile_density(grid.axes[k], m, 0.975);
  }
  return s;
}

double kl_grid(const GridDensity& p, const GridDensity& q) {
  if (p.axes != q.axes) throw ContractViolation("kl_grid: densities live on different axes");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = std::exp(p.logp[i]);
    if (pi < 1e-300) continue;
    kl += p.weight(i) * pi * (p.logp[i] - q.logp[i]);
  }
  return kl;
}

void write_grid_csv(std::ostream& os, const GridDensity& grid) {
  for (std::size_t k = 0; k < grid.dim(); ++k) os << 'x' << (k + 1) << ',';
  os << "logp\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (double v : grid.point(i)) os << fmt17(v) << ',';
    os << fmt17(grid.logp[i]) << '\n';
  }
}

}  // namespace tmerr
