#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <utility>

#include "tmerr/prob_core.hpp"

namespace tmerr {

// Toy nested expectation with ln phi_w(y, z) = 0.5 ln(2/pi) - 2 (5y + wz)^2,
// y, z independent standard normals.

double log_phi_w(double w, double y, double z) noexcept;

/// E_y ln E_z phi_w(y, z) = -0.5 ln((2w^2 + 1/2) pi) - 25 / (2w^2 + 1/2).
double I_star_closed(double w) noexcept;
/// E_{y,z} ln phi_w(y, z) = 0.5 ln(2/pi) - 2 (25 + w^2).
double I_J_closed(double w) noexcept;

/// Plain Monte Carlo estimate of I_J with s pairs from `stream`.
double I_J_mc(double w, std::size_t s, RngStream& stream);
/// Nested estimate of I_star with m = floor(sqrt(s)) inner and n = floor(s/m) outer draws.
double I_star_nmc(double w, std::size_t s, RngStream& stream);

struct WGrid {
  double lo = -8.0;
  double hi = 8.0;
  std::size_t n_points = 321;

  Vector points() const;
};

/// Grid argmax; ties go to the smallest w.
std::pair<double, double> argmax_scan(const std::function<double(double)>& fn, const WGrid& grid);
std::pair<double, double> argmax_scan(const Vector& w, const Vector& values);

struct BiasDemoConfig {
  std::size_t s = 4096;
  std::size_t runs = 100;
  WGrid w_grid;
  std::uint64_t seed = 0;
};

struct BiasDemoCurves {
  Vector w;
  Vector star_closed, j_closed;
  Vector j_mean, j_min, j_max;
  Vector star_mean, star_min, star_max;
};

/// Both estimators on every grid point for every run. Within a run the same
/// draws are reused across w; the two estimators use separate streams.
BiasDemoCurves run_bias_demo(const BiasDemoConfig& cfg);

void write_bias_csv(std::ostream& os, const BiasDemoCurves& curves);

}  // namespace tmerr
