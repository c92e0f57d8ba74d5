#include "tmerr/transport.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string_view>

#include "tmerr/errors.hpp"

namespace tmerr {

namespace {

using Exponents = std::vector<std::uint8_t>;

// Exponent vectors over `nvars` variables with total degree <= degree,
// ordered by total degree, then lexicographically descending.
void compositions(std::size_t nvars, std::size_t total, Exponents& cur, std::size_t pos,
                  std::vector<Exponents>& out) {
  if (pos + 1 == nvars) {
    cur[pos] = static_cast<std::uint8_t>(total);
    out.push_back(cur);
    return;
  }
  for (std::size_t e = total + 1; e-- > 0;) {
    cur[pos] = static_cast<std::uint8_t>(e);
    compositions(nvars, total - e, cur, pos + 1, out);
  }
}

std::vector<Exponents> monomials(std::size_t nvars, std::size_t degree) {
  std::vector<Exponents> out;
  if (nvars == 0) {
    out.emplace_back();
    return out;
  }
  Exponents cur(nvars, 0);
  for (std::size_t g = 0; g <= degree; ++g) compositions(nvars, g, cur, 0, out);
  return out;
}

double ipow(double v, unsigned e) {
  double r = 1.0;
  while (e-- > 0) r *= v;
  return r;
}

void fill_features(const std::vector<Exponents>& terms, std::span<const double> vars, std::span<double> feat) {
  for (std::size_t a = 0; a < terms.size(); ++a) {
    double m = 1.0;
    for (std::size_t v = 0; v < vars.size(); ++v) m *= ipow(vars[v], terms[a][v]);
    feat[a] = m;
  }
}

}  // namespace

double sigmoid(double u) noexcept {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double log_sigmoid(double u) noexcept {
  if (u >= 0.0) return -std::log1p(std::exp(-u));
  return u - std::log1p(std::exp(u));
}

TriangularMap::TriangularMap(std::size_t dim, std::size_t degree, UniformBox box, double kappa)
    : dim_(dim), degree_(degree), kappa_(kappa), box_(std::move(box)), legendre_(gauss_legendre_unit(degree + 1)) {
  if (dim == 0) throw ContractViolation("TriangularMap: dim must be >= 1");
  if (box_.dim() != dim) throw ContractViolation("TriangularMap: box dimension does not match map dimension");
  if (!(kappa > 0.0)) throw ContractViolation("TriangularMap: kappa must be positive");
  if (degree > 8) throw ContractViolation("TriangularMap: degree above 8 is not supported");
  std::size_t next = 0;
  blocks_.resize(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    Block& b = blocks_[k];
    b.offset_terms = monomials(k, degree);
    b.offset_begin = next;
    next += b.offset_terms.size();
    b.integrand_terms = monomials(k + 1, degree);
    b.integrand_begin = next;
    next += b.integrand_terms.size();
  }
  theta_.assign(next, 0.0);
  // Identity core: p_k == sqrt(1 - kappa), c_k == 0.
  for (std::size_t k = 0; k < dim; ++k) theta_[blocks_[k].integrand_begin] = std::sqrt(1.0 - kappa_);
}

TriangularMap TriangularMap::init(std::size_t dim, std::size_t degree, const UniformBox& box, MapInit mode,
                                  std::uint64_t seed) {
  TriangularMap map(dim, degree, box);
  if (mode == MapInit::Randomized) {
    RngStream stream = RngStream::named(seed, "init");
    Vector theta = map.theta();
    for (double& t : theta) t += 0.01 * stream.normal();
    map.set_theta(std::move(theta));
  }
  return map;
}

void TriangularMap::set_theta(Vector theta) {
  if (theta.size() != theta_.size()) {
    throw ContractViolation("TriangularMap::set_theta: expected " + std::to_string(theta_.size()) +
                            " parameters, got " + std::to_string(theta.size()));
  }
  theta_ = std::move(theta);
}

double TriangularMap::offset_value(std::size_t k, std::span<const double> x, std::span<double> feat) const {
  const Block& b = blocks_[k];
  fill_features(b.offset_terms, x.first(k), feat);
  double c = 0.0;
  for (std::size_t a = 0; a < b.offset_terms.size(); ++a) c += theta_[b.offset_begin + a] * feat[a];
  return c;
}

double TriangularMap::integrand_value(std::size_t k, double t, std::span<const double> x,
                                      std::span<double> feat) const {
  const Block& b = blocks_[k];
  double vars[16];
  vars[0] = t;
  for (std::size_t v = 0; v < k; ++v) vars[v + 1] = x[v];
  fill_features(b.integrand_terms, std::span<const double>(vars, k + 1), feat);
  double p = 0.0;
  for (std::size_t a = 0; a < b.integrand_terms.size(); ++a) p += theta_[b.integrand_begin + a] * feat[a];
  return p;
}

double TriangularMap::core_component(std::size_t k, std::span<const double> x) const {
  std::vector<double> feat(std::max(blocks_[k].offset_terms.size(), blocks_[k].integrand_terms.size()));
  const double c = offset_value(k, x, feat);
  double integral = 0.0;
  for (std::size_t q = 0; q < legendre_.nodes.size(); ++q) {
    const double p = integrand_value(k, x[k] * legendre_.nodes[q], x, feat);
    integral += legendre_.weights[q] * (p * p + kappa_);
  }
  return c + x[k] * integral;
}

double TriangularMap::core_diagonal(std::span<const double> x, std::size_t k) const {
  std::vector<double> feat(blocks_[k].integrand_terms.size());
  const double p = integrand_value(k, x[k], x, feat);
  return p * p + kappa_;
}

Vector TriangularMap::core(std::span<const double> x) const {
  if (x.size() != dim_) throw ContractViolation("TriangularMap::core: dimension mismatch");
  Vector u(dim_);
  for (std::size_t k = 0; k < dim_; ++k) {
    u[k] = core_component(k, x);
    if (!std::isfinite(u[k])) {
      throw NumericError("TriangularMap: non-finite core value in component " + std::to_string(k), k);
    }
  }
  return u;
}

MapEvaluation TriangularMap::forward(std::span<const double> x) const {
  if (x.size() != dim_) throw ContractViolation("TriangularMap::forward: dimension mismatch");
  MapEvaluation out;
  out.y.resize(dim_);
  for (std::size_t k = 0; k < dim_; ++k) {
    const double u = core_component(k, x);
    const double s = core_diagonal(x, k);
    if (!std::isfinite(u) || !std::isfinite(s)) {
      throw NumericError("TriangularMap: overflow in component " + std::to_string(k), k);
    }
    const double w = box_.hi[k] - box_.lo[k];
    out.y[k] = box_.lo[k] + w * sigmoid(u);
    out.logdet += std::log(s) + std::log(w) + log_sigmoid(u) + log_sigmoid(-u);
  }
  return out;
}

MapSensitivity TriangularMap::forward_with_sensitivity(std::span<const double> x) const {
  if (x.size() != dim_) throw ContractViolation("TriangularMap::forward: dimension mismatch");
  MapSensitivity out;
  out.eval.y.resize(dim_);
  out.dy_dtheta = Matrix(dim_, theta_.size());
  out.dlogdet_dtheta.assign(theta_.size(), 0.0);
  std::vector<double> feat;
  std::vector<double> du;  // du_k / d(block params)
  std::vector<double> ds;  // ds_k / d(block params)
  for (std::size_t k = 0; k < dim_; ++k) {
    const Block& b = blocks_[k];
    const std::size_t n_off = b.offset_terms.size();
    const std::size_t n_int = b.integrand_terms.size();
    feat.assign(std::max(n_off, n_int), 0.0);
    du.assign(n_off + n_int, 0.0);
    ds.assign(n_off + n_int, 0.0);

    double u = offset_value(k, x, feat);
    for (std::size_t a = 0; a < n_off; ++a) du[a] = feat[a];

    double integral = 0.0;
    for (std::size_t q = 0; q < legendre_.nodes.size(); ++q) {
      const double p = integrand_value(k, x[k] * legendre_.nodes[q], x, feat);
      integral += legendre_.weights[q] * (p * p + kappa_);
      const double coeff = x[k] * legendre_.weights[q] * 2.0 * p;
      for (std::size_t a = 0; a < n_int; ++a) du[n_off + a] += coeff * feat[a];
    }
    u += x[k] * integral;

    const double p_diag = integrand_value(k, x[k], x, feat);
    const double s = p_diag * p_diag + kappa_;
    for (std::size_t a = 0; a < n_int; ++a) ds[n_off + a] = 2.0 * p_diag * feat[a];

    if (!std::isfinite(u) || !std::isfinite(s)) {
      throw NumericError("TriangularMap: overflow in component " + std::to_string(k), k);
    }
    const double w = box_.hi[k] - box_.lo[k];
    const double sg = sigmoid(u);
    out.eval.y[k] = box_.lo[k] + w * sg;
    out.eval.logdet += std::log(s) + std::log(w) + log_sigmoid(u) + log_sigmoid(-u);

    const double dy_du = w * sg * (1.0 - sg);
    const double dsq_du = 1.0 - 2.0 * sg;
    for (std::size_t a = 0; a < n_off + n_int; ++a) {
      const std::size_t j = b.offset_begin + a;  // blocks are contiguous
      out.dy_dtheta(k, j) = dy_du * du[a];
      out.dlogdet_dtheta[j] = ds[a] / s + dsq_du * du[a];
    }
  }
  return out;
}

Vector TriangularMap::inverse(std::span<const double> y) const {
  if (y.size() != dim_) throw ContractViolation("TriangularMap::inverse: dimension mismatch");
  Vector x(dim_, 0.0);
  for (std::size_t k = 0; k < dim_; ++k) {
    const double w = box_.hi[k] - box_.lo[k];
    const double p = (y[k] - box_.lo[k]) / w;
    if (!(p > 0.0 && p < 1.0)) {
      throw DomainError("TriangularMap::inverse: y[" + std::to_string(k) + "] is not strictly inside the box");
    }
    const double target = std::log(p) - std::log1p(-p);

    auto g = [&](double xk) {
      x[k] = xk;
      return core_component(k, x) - target;
    };

    // Bracket around the linearized guess, then safeguarded Newton.
    x[k] = 0.0;
    const double g0 = g(0.0);
    const double slope0 = core_diagonal(x, k);
    const double guess = -g0 / slope0;
    double lo = guess - 1.0;
    double hi = guess + 1.0;
    double glo = g(lo);
    double ghi = g(hi);
    for (int expand = 0; expand < 200 && glo > 0.0; ++expand) {
      const double width = hi - lo;
      hi = lo;
      ghi = glo;
      lo -= 2.0 * width;
      glo = g(lo);
    }
    for (int expand = 0; expand < 200 && ghi < 0.0; ++expand) {
      const double width = hi - lo;
      lo = hi;
      glo = ghi;
      hi += 2.0 * width;
      ghi = g(hi);
    }
    if (glo > 0.0 || ghi < 0.0) {
      throw NumericError("TriangularMap::inverse: failed to bracket component " + std::to_string(k), k);
    }

    double xk = std::clamp(guess, lo, hi);
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      const double gx = g(xk);
      if (gx == 0.0) {
        converged = true;
        break;
      }
      if (gx < 0.0) {
        lo = xk;
      } else {
        hi = xk;
      }
      const double slope = core_diagonal(x, k);
      double next = xk - gx / slope;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      const double step = std::abs(next - xk);
      xk = next;
      if (step <= 1e-12 * std::max(1.0, std::abs(xk)) || hi - lo <= 1e-15 * std::max(1.0, std::abs(xk))) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      throw NumericError("TriangularMap::inverse: root find did not converge in component " + std::to_string(k), k);
    }
    x[k] = xk;
  }
  return x;
}

double pushforward_logpdf(const TriangularMap& map, const GaussianDiag& ref, std::span<const double> y) {
  const Vector x = map.inverse(y);
  return log_pdf_gaussian_diag(x, ref) - map.forward(x).logdet;
}

Vector grad_theta(const TriangularMap& map, const Matrix& x_batch, const MapUpstream& upstream) {
  if (x_batch.cols() != map.dim() || upstream.dy.rows() != x_batch.rows() ||
      upstream.dy.cols() != map.dim() || upstream.dlogdet.size() != x_batch.rows()) {
    throw ContractViolation("grad_theta: batch and upstream shapes disagree");
  }
  Vector g(map.num_params(), 0.0);
  for (std::size_t i = 0; i < x_batch.rows(); ++i) {
    const MapSensitivity s = map.forward_with_sensitivity(x_batch.row(i));
    for (std::size_t j = 0; j < g.size(); ++j) {
      double acc = upstream.dlogdet[i] * s.dlogdet_dtheta[j];
      for (std::size_t k = 0; k < map.dim(); ++k) acc += upstream.dy(i, k) * s.dy_dtheta(k, j);
      g[j] += acc;
    }
  }
  return g;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view tok) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ContractViolation("map record: bad number '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace

std::string serialize(const TriangularMap& map) {
  std::ostringstream os;
  os << "triangular_map 1\n";
  os << "dim " << map.dim() << "\n";
  os << "degree " << map.degree() << "\n";
  os << "kappa " << fmt17(map.kappa()) << "\n";
  os << "lo";
  for (double v : map.box().lo) os << ' ' << fmt17(v);
  os << "\nhi";
  for (double v : map.box().hi) os << ' ' << fmt17(v);
  os << "\ntheta " << map.num_params();
  for (double v : map.theta()) os << ' ' << fmt17(v);
  os << "\n";
  return os.str();
}

TriangularMap deserialize(const std::string& text) {
  std::istringstream is(text);
  std::string key;
  std::string tok;
  std::size_t version = 0, dim = 0, degree = 0, n_theta = 0;
  double kappa = TriangularMap::kDefaultKappa;
  Vector lo, hi, theta;
  if (!(is >> key >> version) || key != "triangular_map" || version != 1) {
    throw ContractViolation("map record: missing 'triangular_map 1' header");
  }
  while (is >> key) {
    if (key == "dim") {
      is >> dim;
    } else if (key == "degree") {
      is >> degree;
    } else if (key == "kappa") {
      is >> tok;
      kappa = parse_double(tok);
    } else if (key == "lo" || key == "hi") {
      Vector& dst = key == "lo" ? lo : hi;
      for (std::size_t k = 0; k < dim; ++k) {
        is >> tok;
        dst.push_back(parse_double(tok));
      }
    } else if (key == "theta") {
      is >> n_theta;
      for (std::size_t j = 0; j < n_theta; ++j) {
        if (!(is >> tok)) throw ContractViolation("map record: truncated theta");
        theta.push_back(parse_double(tok));
      }
    } else {
      throw ContractViolation("map record: unknown key '" + key + "'");
    }
    if (!is) throw ContractViolation("map record: malformed field '" + key + "'");
  }
  TriangularMap map(dim, degree, UniformBox(lo, hi), kappa);
  map.set_theta(std::move(theta));
  return map;
}

}  // namespace tmerr
