#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "tmerr/errors.hpp"
#include "tmerr/oracles.hpp"

using namespace tmerr;

namespace {

InverseProblem affine(std::size_t d = 1) {
  ProblemSetup s;
  s.x_star = {1.0, 3.0};
  s.d = d;
  return make_affine_problem(s);
}

InverseProblem machine() {
  ProblemSetup s;
  s.x_star = {3.0};
  return make_machine_problem(s);
}

// 1D trapezoid integral of exp(v) on a uniform axis.
double trap_exp(const Vector& axis, const Vector& v) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < axis.size(); ++i)
    acc += 0.5 * (axis[i + 1] - axis[i]) * (std::exp(v[i]) + std::exp(v[i + 1]));
  return acc;
}

GridDensity gaussian_grid(double mu, double sd, double lo = -10, double hi = 10, std::size_t n = 2001) {
  Vector ax(n), lv(n);
  for (std::size_t i = 0; i < n; ++i) {
    ax[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    const double z = (ax[i] - mu) / sd;
    lv[i] = -0.5 * z * z;
  }
  return GridDensity::from_log_values({ax}, lv);
}

}  // namespace

TEST_CASE("grid posterior matches a hand-built grid") {
  InverseProblem p = machine();
  const GridDensity g = grid_posterior(p.exact, p.prior, p.noise, p.obs, 128);
  REQUIRE(g.dim() == 1);
  const Vector& ax = g.axes[0];
  CHECK(ax.front() == 0.0);
  CHECK(ax.back() == 15.0);
  Vector lv(ax.size());
  const double y = p.obs.y(0, 0);
  const double sd = p.obs.noise_std[0];
  for (std::size_t i = 0; i < ax.size(); ++i) {
    const double F = 20.0 * ax[i] / (10.0 + ax[i]);
    lv[i] = -0.5 * (y - F) * (y - F) / (sd * sd);
  }
  const double lz = std::log(trap_exp(ax, lv));
  double worst = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i)
    if (g.logp[i] > -600) worst = std::max(worst, std::abs(g.logp[i] - (lv[i] - lz)));
  CHECK(worst <= 1e-9);
  CHECK(p.ledger_snapshot().g_plus == 0);
  CHECK_THROWS_AS(grid_posterior(p.exact, p.prior, p.noise, p.obs, 63), ContractViolation);
}

TEST_CASE("affine exact posterior mean sits at x*") {
  InverseProblem p = affine();
  const PosteriorSummary s = summarize(grid_posterior(p.exact, p.prior, p.noise, p.obs, 256));
  CHECK(std::abs(s.mean[0] - 1.0) <= 1e-3);
  CHECK(std::abs(s.mean[1] - 3.0) <= 1e-3);
  // Likelihood std per axis: 0.05 |F(x*)| / A_kk.
  CHECK(s.stddev()[0] == doctest::Approx(0.05 * 7.0 / 2.0).epsilon(1e-2));
  CHECK(s.stddev()[1] == doctest::Approx(0.05 * 14.0 / 3.0).epsilon(1e-2));
}

TEST_CASE("fixed point with zero model error is the plain posterior") {
  for (InverseProblem p : {affine(), machine()}) {
    const GridDensity a = grid_posterior(p.reduced, p.prior, p.noise, p.obs, 96);
    FixedPointOptions o;
    o.resolution = 96;
    const FixedPointResult r = grid_fixed_point(p.reduced, p.reduced, p.prior, p.noise, p.obs, o);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(std::exp(a.logp[i]) - std::exp(r.density.logp[i])));
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("fast and general routes agree") {
  for (InverseProblem p : {affine(), machine()}) {
    FixedPointOptions fast, slow;
    fast.resolution = slow.resolution = 64;
    slow.allow_fast = false;
    const FixedPointResult a = grid_fixed_point(p.reduced, p.exact, p.prior, p.noise, p.obs, fast);
    const FixedPointResult b = grid_fixed_point(p.reduced, p.exact, p.prior, p.noise, p.obs, slow);
    CHECK(a.used_fast_path);
    CHECK_FALSE(b.used_fast_path);
    CHECK(a.residual <= 1e-10);
    CHECK(b.residual <= 1e-10);
    double peak = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < a.density.size(); ++i) {
      peak = std::max(peak, std::exp(b.density.logp[i]));
      worst = std::max(worst, std::abs(std::exp(a.density.logp[i]) - std::exp(b.density.logp[i])));
    }
    CHECK(worst <= 1e-8 * peak);
  }
}

TEST_CASE("fixed point satisfies its own equation") {
  InverseProblem p = machine();
  FixedPointOptions o;
  o.resolution = 128;
  const FixedPointResult r = grid_fixed_point(p.reduced, p.exact, p.prior, p.noise, p.obs, o);
  const auto ll = integrated_log_likelihood(r.density, p.reduced, p.exact, p.noise, p.obs);
  const GridDensity& g = r.density;
  // ln p(x) - ln L(x) must be constant wherever p has mass.
  double peak = *std::max_element(g.logp.begin(), g.logp.end());
  double ref = 0.0;
  bool have = false;
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.logp[i] < peak - 20) continue;
    const Vector x = g.point(i);
    const double c = g.logp[i] - ll(x);
    if (!have) {
      ref = c;
      have = true;
    }
    worst = std::max(worst, std::abs(c - ref));
  }
  CHECK(have);
  CHECK(worst <= 1e-6);
  const PosteriorSummary s = summarize(g);
  CHECK(s.mean[0] > 2.5);
  CHECK(s.mean[0] < 3.5);
}

TEST_CASE("metropolis on a known target") {
  auto lp = [](std::span<const double> x) { return -0.5 * (x[0] - 2.0) * (x[0] - 2.0) / 0.25; };
  RngStream s = RngStream::named(11, "mcmc");
  const MhResult r = mh_sample(lp, {2.0}, 40000, 2000, {0.8}, s);
  CHECK(r.samples.size() == 40000);
  CHECK(r.acceptance_rate > 0.2);
  CHECK(r.acceptance_rate < 0.9);
  const PosteriorSummary sm = summarize(r.samples, "mcmc");
  CHECK(std::abs(sm.mean[0] - 2.0) <= 3 * sm.mean_se[0]);
  CHECK(sm.stddev()[0] == doctest::Approx(0.5).epsilon(0.05));
  CHECK(sm.q50[0] == doctest::Approx(2.0).epsilon(0.05));

  RngStream s2 = RngStream::named(11, "mcmc");
  const MhResult r2 = mh_sample(lp, {2.0}, 40000, 2000, {0.8}, s2);
  CHECK(r2.samples.points == r.samples.points);

  RngStream s3 = RngStream::named(12, "mcmc");
  auto flat_outside = [](std::span<const double> x) { return x[0] < 0 ? kNegInf : 0.0; };
  CHECK_THROWS_AS(mh_sample(flat_outside, {-1.0}, 10, 0, {1.0}, s3), ContractViolation);
}

TEST_CASE("default proposal width") {
  const Vector v = default_proposal_std(UniformBox({0.0, -2.0}, {15.0, 2.0}));
  CHECK(v[0] == doctest::Approx(0.75));
  CHECK(v[1] == doctest::Approx(0.2));
}

TEST_CASE("kl between gaussian grids") {
  const GridDensity a = gaussian_grid(0.0, 1.0);
  const GridDensity b = gaussian_grid(0.5, 1.5);
  CHECK(kl_grid(a, a) == doctest::Approx(0.0).epsilon(1e-12));
  const double s1 = 1.0, s2 = 1.5, dm = 0.5;
  const double exact = std::log(s2 / s1) + (s1 * s1 + dm * dm) / (2 * s2 * s2) - 0.5;
  CHECK(std::abs(kl_grid(a, b) - exact) <= 1e-6);
  CHECK(kl_grid(b, a) > 0.0);
  CHECK_THROWS_AS(kl_grid(a, gaussian_grid(0.0, 1.0, -10, 10, 101)), ContractViolation);
}

TEST_CASE("grid summaries") {
  const GridDensity g = gaussian_grid(1.25, 0.7);
  const PosteriorSummary s = summarize(g);
  CHECK(s.mean[0] == doctest::Approx(1.25).epsilon(1e-8));
  CHECK(s.stddev()[0] == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(s.q50[0] == doctest::Approx(1.25).epsilon(1e-3));
  CHECK(s.q025[0] == doctest::Approx(1.25 - 1.959964 * 0.7).epsilon(1e-3));
  CHECK(s.q975[0] == doctest::Approx(1.25 + 1.959964 * 0.7).epsilon(1e-3));
  CHECK(s.mean_se[0] == 0.0);
  CHECK(trap_exp(g.axes[0], g.logp) == doctest::Approx(1.0).epsilon(1e-12));

  InverseProblem p = affine();
  const GridDensity g2 = grid_posterior(p.exact, p.prior, p.noise, p.obs, 128);
  for (std::size_t k = 0; k < 2; ++k) {
    const Vector m = marginal(g2, k);
    const Vector& ax = g2.axes[k];
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < ax.size(); ++i) acc += 0.5 * (ax[i + 1] - ax[i]) * (m[i] + m[i + 1]);
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("sample summaries") {
  SampleBatch b;
  b.points = Matrix(100000, 2);
  RngStream s = RngStream::named(3, "t");
  for (std::size_t i = 0; i < b.size(); ++i) {
    b.points(i, 0) = 1.0 + 2.0 * s.normal();
    b.points(i, 1) = -1.0 + 0.5 * s.normal();
  }
  const PosteriorSummary sm = summarize(b);
  CHECK(std::abs(sm.mean[0] - 1.0) <= 3 * sm.mean_se[0]);
  CHECK(std::abs(sm.mean[1] + 1.0) <= 3 * sm.mean_se[1]);
  CHECK(sm.mean_se[0] == doctest::Approx(2.0 / std::sqrt(100000.0)).epsilon(0.25));
  CHECK(sm.stddev()[0] == doctest::Approx(2.0).epsilon(0.02));
  CHECK(std::abs(sm.cov(0, 1)) < 0.02);
  CHECK(sm.source == "transport");
}

TEST_CASE("normalization and output") {
  CHECK_THROWS_AS(GridDensity::from_log_values({{0.0, 1.0}}, {kNegInf, kNegInf}), ConfigError);
  std::ostringstream os;
  write_grid_csv(os, gaussian_grid(0.0, 1.0, -1, 1, 3));
  const std::string out = os.str();
  CHECK(out.rfind("x1,logp\n", 0) == 0);
  CHECK(std::count(out.begin(), out.end(), '\n') == 4);
}

TEST_CASE("symmetric grid density has its mean at the center") {
  const PosteriorSummary s = summarize(gaussian_grid(0.0, 1.3));
  CHECK(std::abs(s.mean[0]) <= 1e-12);
  CHECK(std::abs(s.q50[0]) <= 1e-9);
}

TEST_CASE("unit gaussians one apart") {
  CHECK(std::abs(kl_grid(gaussian_grid(0.0, 1.0), gaussian_grid(1.0, 1.0)) - 0.5) <= 1e-3);
}

TEST_CASE("metropolis against the grid") {
  InverseProblem p = affine();
  const PosteriorSummary g = summarize(grid_posterior(p.exact, p.prior, p.noise, p.obs, 256));
  RngStream s = RngStream::named(21, "mcmc");
  Vector prop = g.stddev();
  for (double& v : prop) v *= 1.7;
  const MhResult r = mh_sample(log_posterior(p.exact, p.prior, p.noise, p.obs), g.mean, 20000, 2000, prop, s);
  const PosteriorSummary m = summarize(r.samples, "mcmc");
  CHECK(std::abs(m.mean[0] - g.mean[0]) <= 0.05);
  CHECK(std::abs(m.mean[1] - g.mean[1]) <= 0.05);

  InverseProblem q = machine();
  const PosteriorSummary gq = summarize(grid_posterior(q.exact, q.prior, q.noise, q.obs, 256));
  RngStream s2 = RngStream::named(22, "mcmc");
  const MhResult big =
      mh_sample(log_posterior(q.exact, q.prior, q.noise, q.obs), gq.mean, 1000000, 5000, {2.4 * gq.stddev()[0]}, s2);
  const PosteriorSummary mq = summarize(big.samples, "mcmc");
  CHECK(std::abs(mq.mean[0] - gq.mean[0]) <= 3 * mq.mean_se[0]);
  CHECK(mq.stddev()[0] == doctest::Approx(gq.stddev()[0]).epsilon(0.01));
  CHECK(mq.q50[0] == doctest::Approx(gq.q50[0]).epsilon(0.005));
}

TEST_CASE("zero model error converges in one sweep") {
  InverseProblem p = machine();
  FixedPointOptions o;
  o.resolution = 128;
  const FixedPointResult r = grid_fixed_point(p.reduced, p.reduced, p.prior, p.noise, p.obs, o);
  CHECK(r.sweeps <= 1);
  CHECK(r.residual <= 1e-10);
}

TEST_CASE("affine fixed point against the exact posterior") {
  InverseProblem p = affine();
  const PosteriorSummary fp = summarize(grid_fixed_point(p.reduced, p.exact, p.prior, p.noise, p.obs).density);
  const PosteriorSummary ex = summarize(grid_posterior(p.exact, p.prior, p.noise, p.obs, 256));
  CHECK(std::abs(fp.mean[0] - ex.mean[0]) <= 0.1);
  // The second axis has an expanding error map (slope 2), so the fixed point spreads
  // over the prior and its mean moves to 4.53; MH on the integrated likelihood agrees.
  CHECK(fp.mean[1] == doctest::Approx(4.5273).epsilon(1e-4));
  CHECK(fp.stddev()[1] > 2.0);
}

TEST_CASE("proposals outside the support are counted") {
  InverseProblem p = machine();
  const auto lp = log_posterior(p.exact, p.prior, p.noise, p.obs);
  RngStream s = RngStream::named(5, "mcmc");
  const MhResult r = mh_sample(lp, {0.5}, 2000, 0, {3.0}, s);
  CHECK(r.rejected_outside > 0);
  // One evaluation at x0 plus one per proposal inside the box.
  CHECK(p.ledger_snapshot().g_plus == 1 + 2000 - r.rejected_outside);
}
