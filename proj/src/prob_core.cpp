#include "tmerr/prob_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tmerr/errors.hpp"

namespace tmerr {

double RngStream::normal() noexcept {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

GaussianDiag::GaussianDiag(Vector mean_, Vector std_) : mean(std::move(mean_)), std(std::move(std_)) {
  if (mean.size() != std.size()) {
    throw ContractViolation("GaussianDiag: mean has dim " + std::to_string(mean.size()) +
                            " but std has dim " + std::to_string(std.size()));
  }
  for (std::size_t k = 0; k < std.size(); ++k) {
    if (!(std[k] > 0.0) || !std::isfinite(std[k])) {
      throw ContractViolation("GaussianDiag: std[" + std::to_string(k) + "] must be positive and finite");
    }
  }
}

GaussianDiag GaussianDiag::standard(std::size_t dim) { return {Vector(dim, 0.0), Vector(dim, 1.0)}; }

UniformBox::UniformBox(Vector lo_, Vector hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size()) throw ContractViolation("UniformBox: lo/hi dimension mismatch");
  for (std::size_t k = 0; k < lo.size(); ++k) {
    if (!(lo[k] < hi[k])) {
      throw ContractViolation("UniformBox: need lo < hi in component " + std::to_string(k));
    }
  }
}

Vector UniformBox::center() const {
  Vector c(dim());
  for (std::size_t k = 0; k < dim(); ++k) c[k] = 0.5 * (lo[k] + hi[k]);
  return c;
}

double UniformBox::log_volume() const {
  double s = 0.0;
  for (std::size_t k = 0; k < dim(); ++k) s += std::log(hi[k] - lo[k]);
  return s;
}

bool UniformBox::contains(std::span<const double> x) const {
  if (x.size() != dim()) return false;
  for (std::size_t k = 0; k < dim(); ++k) {
    if (!(x[k] >= lo[k] && x[k] <= hi[k])) return false;
  }
  return true;
}

double log_pdf_gaussian_diag(std::span<const double> x, const GaussianDiag& g) {
  if (x.size() != g.dim()) {
    throw ContractViolation("log_pdf_gaussian_diag: x has dim " + std::to_string(x.size()) +
                            ", density has dim " + std::to_string(g.dim()));
  }
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = (x[k] - g.mean[k]) / g.std[k];
    s += -std::log(g.std[k]) - kHalfLog2Pi - 0.5 * r * r;
  }
  return s;
}

double log_pdf_uniform_box(std::span<const double> x, const UniformBox& b) {
  return b.contains(x) ? -b.log_volume() : kNegInf;
}

SampleBatch sample(const Density& density, std::size_t n, RngStream& stream) {
  if (n == 0) throw ContractViolation("sample: n must be >= 1");
  SampleBatch batch;
  batch.seed_tag = stream.key();
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        batch.points = Matrix(n, d.dim());
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t k = 0; k < d.dim(); ++k) {
            if constexpr (std::is_same_v<T, GaussianDiag>) {
              batch.points(i, k) = d.mean[k] + d.std[k] * stream.normal();
            } else {
              batch.points(i, k) = d.lo[k] + (d.hi[k] - d.lo[k]) * stream.uniform();
            }
          }
        }
      },
      density);
  return batch;
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw ContractViolation("logsumexp: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  if (mx == kNegInf) return kNegInf;
  if (std::isinf(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace tmerr
