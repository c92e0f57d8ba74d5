#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tmerr/errors.hpp"
#include "tmerr/transport.hpp"

using namespace tmerr;

namespace {

const UniformBox kBox({0.0, 0.0}, {15.0, 15.0});

// Identity plus a sizeable seeded perturbation, so every coefficient matters.
TriangularMap random_map(std::size_t dim, std::size_t degree, std::uint64_t seed, double scale = 0.15) {
  UniformBox box(Vector(dim, -2.0), Vector(dim, 13.0));
  TriangularMap T(dim, degree, box);
  RngStream s = RngStream::named(seed, "test-map");
  Vector th = T.theta();
  for (double& v : th) v += scale * s.normal();
  T.set_theta(th);
  return T;
}

Vector random_point(std::size_t dim, RngStream& s, double scale = 1.5) {
  Vector x(dim);
  for (double& v : x) v = scale * s.normal();
  return x;
}

// Central-difference Jacobian of the full map.
std::vector<Vector> fd_jacobian(const TriangularMap& T, const Vector& x, double h) {
  std::vector<Vector> J(T.dim(), Vector(T.dim()));
  for (std::size_t l = 0; l < T.dim(); ++l) {
    Vector xp = x, xm = x;
    xp[l] += h;
    xm[l] -= h;
    const Vector yp = T.forward(xp).y, ym = T.forward(xm).y;
    for (std::size_t k = 0; k < T.dim(); ++k) J[k][l] = (yp[k] - ym[k]) / (2 * h);
  }
  return J;
}

double det(const std::vector<Vector>& J) {
  if (J.size() == 1) return J[0][0];
  if (J.size() == 2) return J[0][0] * J[1][1] - J[0][1] * J[1][0];
  return J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) - J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
         J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
}

}  // namespace

TEST_CASE("identity-to-box init") {
  const TriangularMap T = TriangularMap::init(2, 1, kBox, MapInit::IdentityToBox);
  const MapEvaluation e = T.forward(Vector{0.0, 0.0});
  CHECK(e.y[0] == doctest::Approx(7.5));
  CHECK(e.y[1] == doctest::Approx(7.5));
  RngStream s = RngStream::named(1, "test");
  for (int i = 0; i < 20; ++i) {
    const Vector x = random_point(2, s);
    double squash = 0.0;
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(T.core(x)[k] == doctest::Approx(x[k]).epsilon(1e-14));
      squash += std::log(15.0) + log_sigmoid(x[k]) + log_sigmoid(-x[k]);
    }
    CHECK(T.forward(x).logdet == doctest::Approx(squash).epsilon(1e-13));
  }
  const TriangularMap a = TriangularMap::init(2, 2, kBox, MapInit::Randomized, 42);
  const TriangularMap b = TriangularMap::init(2, 2, kBox, MapInit::Randomized, 42);
  const TriangularMap c = TriangularMap::init(2, 2, kBox, MapInit::Randomized, 43);
  CHECK(a.theta() == b.theta());
  CHECK(a.theta() != c.theta());
  CHECK(a.theta() != T.theta());
}

TEST_CASE("parameter counts") {
  // dim 2, degree 1: c_1 const (1) + p_1(t) (2); c_2(x1) (2) + p_2(t, x1) (3).
  CHECK(TriangularMap(2, 1, kBox).num_params() == 8);
  CHECK(TriangularMap(1, 0, UniformBox({0.0}, {1.0})).num_params() == 2);
  CHECK_THROWS_AS(TriangularMap(2, 1, UniformBox({0.0}, {1.0})), ContractViolation);
}

TEST_CASE("triangularity and monotonicity") {
  RngStream s = RngStream::named(2, "test");
  for (std::size_t dim : {2u, 3u}) {
    const TriangularMap T = random_map(dim, 2, 10 + dim);
    for (int i = 0; i < 1000; ++i) {
      const Vector x = random_point(dim, s, 2.0);
      for (std::size_t k = 0; k < dim; ++k) CHECK(T.core_diagonal(x, k) > 0.0);
    }
    for (int i = 0; i < 10; ++i) {
      const Vector x = random_point(dim, s);
      const auto J = fd_jacobian(T, x, 1e-6);
      for (std::size_t k = 0; k < dim; ++k) {
        for (std::size_t l = k + 1; l < dim; ++l) CHECK(std::abs(J[k][l]) <= 1e-8);
      }
    }
  }
  const TriangularMap T = random_map(2, 1, 3);
  const Vector a = T.forward(Vector{0.3, -1.0}).y;
  const Vector b = T.forward(Vector{0.3, 2.0}).y;
  CHECK(a[0] == b[0]);
  CHECK(a[1] != b[1]);
}

TEST_CASE("logdet matches finite-difference Jacobian") {
  RngStream s = RngStream::named(3, "test");
  for (std::size_t dim : {1u, 2u, 3u}) {
    const TriangularMap T = random_map(dim, 2, 20 + dim);
    for (int i = 0; i < 10; ++i) {
      const Vector x = random_point(dim, s);
      const double fd = std::log(std::abs(det(fd_jacobian(T, x, 1e-5))));
      CHECK(std::abs(T.forward(x).logdet - fd) <= 1e-5);
    }
  }
}

TEST_CASE("inverse round trip") {
  RngStream s = RngStream::named(4, "test");
  // Saturated maps put y on the box edge in double precision, so only maps whose
  // logit stays moderate on the cube are tested; the guard keeps that honest.
  auto logit_ok = [](const Vector& y) {
    for (double v : y) {
      const double u = (v + 2.0) / 15.0;
      if (std::abs(std::log(u / (1 - u))) > 15.0) return false;
    }
    return true;
  };
  for (std::size_t degree : {1u, 2u}) {
    for (std::size_t dim : {1u, 2u, 3u}) {
      const TriangularMap T = random_map(dim, degree, 30 + dim, 0.05);
      for (int i = 0; i < 100; ++i) {
        const Vector x = random_point(dim, s);
        const Vector y = T.forward(x).y;
        REQUIRE(logit_ok(y));
        const Vector back = T.inverse(y);
        for (std::size_t k = 0; k < dim; ++k) CHECK(std::abs(back[k] - x[k]) <= 1e-8);
      }
      if (degree == 2 && dim == 3) continue;
      // Corners of the +-4 sigma cube.
      for (std::size_t mask = 0; mask < (1u << dim); ++mask) {
        Vector x(dim);
        for (std::size_t k = 0; k < dim; ++k) x[k] = (mask >> k & 1) ? 4.0 : -4.0;
        const Vector y = T.forward(x).y;
        REQUIRE(logit_ok(y));
        const Vector back = T.inverse(y);
        for (std::size_t k = 0; k < dim; ++k) CHECK(std::abs(back[k] - x[k]) <= 1e-8);
      }
    }
  }
  const TriangularMap I = TriangularMap::init(2, 1, kBox, MapInit::IdentityToBox);
  const Vector c = I.inverse(Vector{7.5, 7.5});
  CHECK(std::abs(c[0]) <= 1e-12);
  CHECK(std::abs(c[1]) <= 1e-12);
  // Forward image within 1e-10 of the target.
  const TriangularMap T = random_map(2, 2, 5);
  const Vector y{3.3, 9.1};
  const Vector fy = T.forward(T.inverse(y)).y;
  CHECK(std::abs(fy[0] - y[0]) <= 1e-10);
  CHECK(std::abs(fy[1] - y[1]) <= 1e-10);
}

TEST_CASE("inverse near and outside the boundary") {
  const TriangularMap I = TriangularMap::init(2, 1, kBox, MapInit::IdentityToBox);
  double prev = 0.0;
  for (double gap : {1.0, 1e-1, 1e-2, 1e-4, 1e-6, 1e-9}) {
    const double x = I.inverse(Vector{15.0 - gap, 7.5})[0];
    CHECK(x > prev);
    prev = x;
  }
  CHECK_THROWS_AS(I.inverse(Vector{15.0, 7.5}), DomainError);
  CHECK_THROWS_AS(I.inverse(Vector{-1.0, 7.5}), DomainError);
}

TEST_CASE("overflow reports the component") {
  TriangularMap T(2, 1, kBox);
  Vector th = T.theta();
  th[T.integrand_constant_index(1)] = 1e200;
  T.set_theta(th);
  try {
    T.forward(Vector{0.5, 0.5});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("pushforward density") {
  const GaussianDiag ref = GaussianDiag::standard(2);
  TriangularMap T(2, 1, kBox);
  Vector th = T.theta();
  th[T.integrand_constant_index(0)] = 0.8;
  th[T.offset_constant_index(1) + 1] = 0.3;  // c_2 linear in x_1
  T.set_theta(th);
  const std::size_t n = 200;
  const double h = 15.0 / n;
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const Vector y{(a + 0.5) * h, (b + 0.5) * h};
      total += h * h * std::exp(pushforward_logpdf(T, ref, y));
    }
  }
  CHECK(std::abs(total - 1.0) <= 1e-2);

  const TriangularMap I = TriangularMap::init(2, 1, kBox, MapInit::IdentityToBox);
  const double at_center = pushforward_logpdf(I, ref, Vector{7.5, 7.5});
  CHECK(at_center == doctest::Approx(log_pdf_gaussian_diag(Vector{0.0, 0.0}, ref) - I.forward(Vector{0.0, 0.0}).logdet));

  UniformBox box1({0.0}, {15.0});
  TriangularMap one(1, 0, box1);
  TriangularMap two(1, 0, box1);
  two.set_theta({0.0, std::sqrt(2.0 - two.kappa())});
  const GaussianDiag r1 = GaussianDiag::standard(1);
  CHECK(pushforward_logpdf(one, r1, Vector{7.5}) - pushforward_logpdf(two, r1, Vector{7.5}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("empirical pushforward matches density (1-D KS)") {
  const GaussianDiag ref = GaussianDiag::standard(1);
  TriangularMap T(1, 2, UniformBox({0.0}, {15.0}));
  T.set_theta({0.4, 0.9, 0.2, -0.1});
  RngStream s = RngStream::named(6, "test");
  const std::size_t N = 100000;
  Vector ys(N);
  for (double& y : ys) y = T.forward(Vector{s.normal()}).y[0];
  std::sort(ys.begin(), ys.end());
  // CDF from the density by midpoint quadrature on a fine grid.
  const std::size_t G = 20000;
  const double h = 15.0 / G;
  Vector cdf(G + 1, 0.0);
  for (std::size_t i = 0; i < G; ++i) cdf[i + 1] = cdf[i] + h * std::exp(pushforward_logpdf(T, ref, Vector{(i + 0.5) * h}));
  double ks = 0.0;
  for (std::size_t i = 0; i < N; i += 37) {
    const auto cell = std::min<std::size_t>(static_cast<std::size_t>(ys[i] / h), G - 1);
    const double F = cdf[cell] + (ys[i] / h - cell) * (cdf[cell + 1] - cdf[cell]);
    const double emp = (i + 0.5) / N;
    ks = std::max(ks, std::abs(F - emp));
  }
  CHECK(ks <= 0.02);
}

TEST_CASE("parameter gradient matches finite differences") {
  RngStream s = RngStream::named(7, "test");
  for (std::size_t dim : {1u, 2u}) {
    const TriangularMap T = random_map(dim, 2, 40 + dim);
    const std::size_t n = 5;
    Matrix xb(n, dim);
    for (double& v : xb.data()) v = s.normal();
    MapUpstream up{Matrix(n, dim), Vector(n)};
    for (double& v : up.dy.data()) v = s.normal();
    for (double& v : up.dlogdet) v = s.normal();
    auto objective = [&](const TriangularMap& M) {
      double L = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const MapEvaluation e = M.forward(xb.row(i));
        L += up.dlogdet[i] * e.logdet;
        for (std::size_t k = 0; k < dim; ++k) L += up.dy(i, k) * e.y[k];
      }
      return L;
    };
    const Vector g = grad_theta(T, xb, up);
    for (std::size_t p = 0; p < T.num_params(); ++p) {
      TriangularMap Tp = T, Tm = T;
      Vector th = T.theta();
      th[p] += 1e-5;
      Tp.set_theta(th);
      th[p] -= 2e-5;
      Tm.set_theta(th);
      const double fd = (objective(Tp) - objective(Tm)) / 2e-5;
      CHECK(std::abs(g[p] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
    MapUpstream zero{Matrix(n, dim), Vector(n, 0.0)};
    for (double v : grad_theta(T, xb, zero)) CHECK(v == 0.0);

    Matrix one(1, dim), twice(2, dim);
    for (std::size_t k = 0; k < dim; ++k) one(0, k) = twice(0, k) = twice(1, k) = xb(0, k);
    MapUpstream u1{Matrix(1, dim, 0.7), Vector(1, -0.4)};
    MapUpstream u2{Matrix(2, dim, 0.7), Vector(2, -0.4)};
    const Vector g1 = grad_theta(T, one, u1);
    const Vector g2 = grad_theta(T, twice, u2);
    for (std::size_t p = 0; p < g1.size(); ++p) CHECK(g2[p] == doctest::Approx(2.0 * g1[p]).epsilon(1e-14));
  }
}

TEST_CASE("serialization round-trips bit-exactly") {
  const TriangularMap T = random_map(3, 2, 50);
  const TriangularMap back = deserialize(serialize(T));
  CHECK(back == T);
  CHECK(serialize(back) == serialize(T));
  CHECK_THROWS_AS(deserialize("nonsense"), ContractViolation);
}
