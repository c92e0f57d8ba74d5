#include "tmerr/bias_demo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "tmerr/errors.hpp"

namespace tmerr {

namespace {

const double kLogNorm = 0.5 * std::log(2.0 / std::numbers::pi);

struct NestedShape {
  std::size_t n, m;
};

NestedShape sqrt_split(std::size_t s) {
  if (s < 4) throw ContractViolation("I_star_nmc: s must be >= 4");
  auto m = static_cast<std::size_t>(std::sqrt(static_cast<double>(s)));
  while (m * m > s) --m;
  while ((m + 1) * (m + 1) <= s) ++m;
  return {s / m, m};
}

double nested_from_draws(double w, const Vector& y, const Vector& z, std::size_t n, std::size_t m,
                         Vector& scratch) {
  const double ln_m = std::log(static_cast<double>(m));
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) scratch[j] = log_phi_w(w, y[i], z[i * m + j]);
    acc += logsumexp(std::span<const double>(scratch.data(), m)) - ln_m;
  }
  return acc / static_cast<double>(n);
}

double jensen_from_draws(double w, const Vector& y, const Vector& z) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += log_phi_w(w, y[i], z[i]);
  return acc / static_cast<double>(y.size());
}

Vector normals(std::size_t n, RngStream& stream) {
  Vector v(n);
  for (double& x : v) x = stream.normal();
  return v;
}

}  // namespace

double log_phi_w(double w, double y, double z) noexcept {
  const double a = 5.0 * y + w * z;
  return kLogNorm - 2.0 * a * a;
}

double I_star_closed(double w) noexcept {
  const double u = 2.0 * w * w + 0.5;
  return -0.5 * std::log(u * std::numbers::pi) - 25.0 / u;
}

double I_J_closed(double w) noexcept { return kLogNorm - 2.0 * (25.0 + w * w); }

double I_J_mc(double w, std::size_t s, RngStream& stream) {
  if (s == 0) throw ContractViolation("I_J_mc: s must be >= 1");
  Vector y(s), z(s);
  for (std::size_t i = 0; i < s; ++i) {
    y[i] = stream.normal();
    z[i] = stream.normal();
  }
  return jensen_from_draws(w, y, z);
}

double I_star_nmc(double w, std::size_t s, RngStream& stream) {
  const NestedShape sh = sqrt_split(s);
  const Vector y = normals(sh.n, stream);
  const Vector z = normals(sh.n * sh.m, stream);
  Vector scratch(sh.m);
  return nested_from_draws(w, y, z, sh.n, sh.m, scratch);
}

Vector WGrid::points() const {
  if (n_points < 2) throw ContractViolation("WGrid: need at least 2 points");
  if (!(lo < hi)) throw ContractViolation("WGrid: lo must be below hi");
  Vector w(n_points);
  const double h = (hi - lo) / static_cast<double>(n_points - 1);
  for (std::size_t i = 0; i < n_points; ++i) w[i] = lo + h * static_cast<double>(i);
  w.back() = hi;
  return w;
}

std::pair<double, double> argmax_scan(const Vector& w, const Vector& values) {
  if (w.empty() || w.size() != values.size()) throw ContractViolation("argmax_scan: empty or mismatched grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < w.size(); ++i) {
    if (values[i] > values[best] || (values[i] == values[best] && w[i] < w[best])) best = i;
  }
  return {w[best], values[best]};
}

std::pair<double, double> argmax_scan(const std::function<double(double)>& fn, const WGrid& grid) {
  const Vector w = grid.points();
  Vector v(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) v[i] = fn(w[i]);
  return argmax_scan(w, v);
}

BiasDemoCurves run_bias_demo(const BiasDemoConfig& cfg) {
  if (cfg.s < 4) throw ConfigError("bias-demo: s must be >= 4");
  if (cfg.runs == 0) throw ConfigError("bias-demo: runs must be >= 1");
  BiasDemoCurves c;
  c.w = cfg.w_grid.points();
  const std::size_t W = c.w.size();
  c.star_closed.resize(W);
  c.j_closed.resize(W);
  for (std::size_t i = 0; i < W; ++i) {
    c.star_closed[i] = I_star_closed(c.w[i]);
    c.j_closed[i] = I_J_closed(c.w[i]);
  }
  c.j_mean.assign(W, 0.0);
  c.star_mean.assign(W, 0.0);
  c.j_min.assign(W, std::numeric_limits<double>::infinity());
  c.star_min.assign(W, std::numeric_limits<double>::infinity());
  c.j_max.assign(W, -std::numeric_limits<double>::infinity());
  c.star_max.assign(W, -std::numeric_limits<double>::infinity());

  const NestedShape sh = sqrt_split(cfg.s);
  const RngStream jensen_root = RngStream::named(cfg.seed, "bias-jensen");
  const RngStream nested_root = RngStream::named(cfg.seed, "bias-nmc");
  Vector scratch(sh.m);
  for (std::size_t r = 0; r < cfg.runs; ++r) {
    RngStream js = jensen_root.split(r);
    Vector jy(cfg.s), jz(cfg.s);
    for (std::size_t i = 0; i < cfg.s; ++i) {
      jy[i] = js.normal();
      jz[i] = js.normal();
    }
    RngStream ns = nested_root.split(r);
    const Vector ny = normals(sh.n, ns);
    const Vector nz = normals(sh.n * sh.m, ns);
    for (std::size_t i = 0; i < W; ++i) {
      const double vj = jensen_from_draws(c.w[i], jy, jz);
      const double vs = nested_from_draws(c.w[i], ny, nz, sh.n, sh.m, scratch);
      c.j_mean[i] += vj;
      c.star_mean[i] += vs;
      c.j_min[i] = std::min(c.j_min[i], vj);
      c.j_max[i] = std::max(c.j_max[i], vj);
      c.star_min[i] = std::min(c.star_min[i], vs);
      c.star_max[i] = std::max(c.star_max[i], vs);
    }
  }
  for (std::size_t i = 0; i < W; ++i) {
    c.j_mean[i] /= static_cast<double>(cfg.runs);
    c.star_mean[i] /= static_cast<double>(cfg.runs);
  }
  return c;
}

void write_bias_csv(std::ostream& os, const BiasDemoCurves& c) {
  os << "w,I_star_closed,I_J_closed,I_J_mc_mean,I_J_mc_min,I_J_mc_max,I_star_nmc_mean,I_star_nmc_min,"
        "I_star_nmc_max\n";
  char buf[40];
  auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf << sep;
  };
  for (std::size_t i = 0; i < c.w.size(); ++i) {
    put(c.w[i], ',');
    put(c.star_closed[i], ',');
    put(c.j_closed[i], ',');
    put(c.j_mean[i], ',');
    put(c.j_min[i], ',');
    put(c.j_max[i], ',');
    put(c.star_mean[i], ',');
    put(c.star_min[i], ',');
    put(c.star_max[i], '\n');
  }
}

}  // namespace tmerr
