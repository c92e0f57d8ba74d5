#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <variant>
#include <vector>

#include "tmerr/rng.hpp"

namespace tmerr {

using Vector = std::vector<double>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Dense row-major n x d matrix of doubles. Rows are samples.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Product of independent normals N(mean_k, std_k^2).
struct GaussianDiag {
  Vector mean;
  Vector std;

  GaussianDiag() = default;
  GaussianDiag(Vector mean_, Vector std_);

  static GaussianDiag standard(std::size_t dim);
  std::size_t dim() const noexcept { return mean.size(); }
};

/// Uniform density on the closed box [lo, hi].
struct UniformBox {
  Vector lo;
  Vector hi;

  UniformBox() = default;
  UniformBox(Vector lo_, Vector hi_);

  std::size_t dim() const noexcept { return lo.size(); }
  Vector center() const;
  double log_volume() const;
  bool contains(std::span<const double> x) const;
  bool operator==(const UniformBox&) const = default;
};

/// Finite i.i.d. draws plus the key of the stream that produced them.
struct SampleBatch {
  Matrix points;
  std::uint64_t seed_tag = 0;

  std::size_t size() const noexcept { return points.rows(); }
  std::size_t dim() const noexcept { return points.cols(); }
};

using Density = std::variant<GaussianDiag, UniformBox>;

double log_pdf_gaussian_diag(std::span<const double> x, const GaussianDiag& g);
double log_pdf_uniform_box(std::span<const double> x, const UniformBox& b);

/// n i.i.d. draws. Same (density, n, stream state) gives a bit-identical batch.
SampleBatch sample(const Density& density, std::size_t n, RngStream& stream);

/// ln sum_j exp(v_j), shifted by the maximum. All -inf input gives -inf.
double logsumexp(std::span<const double> v);

}  // namespace tmerr
