#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Cholesky>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "svsde/spline.hpp"
#include "svsde/types.hpp"

using namespace svsde;

namespace {

// Independent Cox-de Boor recursion straight from the definition, one basis
// function at a time.
double naive_bspline(const std::vector<double>& t, int i, int p, double u) {
  if (p == 0) {
    // Half-open intervals, except the last interval is closed at the top.
    const bool last = t[i + 1] >= t[t.size() - 1] - 1e-15;
    return (u >= t[i] && (u < t[i + 1] || (last && u <= t[i + 1]))) ? 1.0 : 0.0;
  }
  double left = 0.0, right = 0.0;
  if (t[i + p] > t[i])
    left = (u - t[i]) / (t[i + p] - t[i]) * naive_bspline(t, i, p - 1, u);
  if (t[i + p + 1] > t[i + 1])
    right = (t[i + p + 1] - u) / (t[i + p + 1] - t[i + 1]) *
            naive_bspline(t, i + 1, p - 1, u);
  return left + right;
}

}  // namespace

TEST_CASE("basis values match the naive Cox-de Boor recursion") {
  const SplineBasis b(4, 9, -2.0, 3.0);
  const auto& t = b.knots();
  for (int s = 0; s <= 200; ++s) {
    const double u = -2.0 + 5.0 * s / 200.0;
    const auto [v, d] = b.eval_with_deriv(u);
    for (int i = 0; i < b.count(); ++i)
      CHECK(v[i] == doctest::Approx(naive_bspline(t, i, 3, u)).epsilon(1e-12));
  }
}

TEST_CASE("partition of unity and zero derivative sum") {
  for (int count : {4, 6, 8, 16}) {
    const SplineBasis b(4, count, -1.0, 1.0);
    Rng rng(7);
    for (int s = 0; s < 1000; ++s) {
      const double u = rng.uniform(-1.0, 1.0);
      const auto [v, d] = b.eval_with_deriv(u);
      CHECK(std::abs(v.sum() - 1.0) < 1e-12);
      CHECK(std::abs(d.sum()) < 1e-10);
    }
  }
}

TEST_CASE("sparse evaluation agrees with the dense one") {
  const SplineBasis b(4, 11, 0.0, 65.0);
  Rng rng(11);
  for (int s = 0; s < 500; ++s) {
    const double u = rng.uniform(0.0, 65.0);
    const auto [v, d] = b.eval_with_deriv(u);
    const auto loc = b.eval_local(u);
    Vector vs = Vector::Zero(b.count()), ds = Vector::Zero(b.count());
    for (int a = 0; a < b.order(); ++a) {
      vs[loc.first + a] = loc.value[a];
      ds[loc.first + a] = loc.deriv[a];
    }
    CHECK((vs - v).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((ds - d).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("derivatives match central finite differences") {
  const SplineBasis b(4, 8, -3.0, 3.0);
  const double h = 1e-6;
  for (int s = 1; s < 100; ++s) {
    const double u = -3.0 + 6.0 * s / 100.0;
    const auto [vp, dp] = b.eval_with_deriv(u + h);
    const auto [vm, dm] = b.eval_with_deriv(u - h);
    const auto [v, d] = b.eval_with_deriv(u);
    for (int i = 0; i < b.count(); ++i)
      CHECK(std::abs(d[i] - (vp[i] - vm[i]) / (2 * h)) < 1e-6);
  }
}

TEST_CASE("clamped endpoints: single basis function carries each boundary") {
  const SplineBasis b(4, 8, -3.0, 3.0);
  const auto [vlo, dlo] = b.eval_with_deriv(-3.0);
  const auto [vhi, dhi] = b.eval_with_deriv(3.0);
  CHECK(vlo[0] == doctest::Approx(1.0));
  CHECK(vhi[b.count() - 1] == doctest::Approx(1.0));
}

TEST_CASE("evaluation outside the domain names the argument") {
  const SplineBasis b(4, 8, -3.0, 3.0);
  CHECK_THROWS_WITH_AS((void)b.eval_with_deriv(3.5),
                       "SplineBasis: u=3.5 outside domain [-3, 3]",
                       std::domain_error);
  CHECK_THROWS_AS((void)b.eval_local(-3.0001), std::domain_error);
  CHECK_THROWS_AS(SplineBasis(4, 3, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(SplineBasis(4, 8, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("tensor surface matches the naive double sum and FD gradient") {
  const SplineBasis bx(4, 7, -2.0, 2.0), by(4, 9, -1.0, 3.0);
  Rng rng(3);
  Matrix c(7, 9);
  for (int k = 0; k < 7; ++k)
    for (int l = 0; l < 9; ++l) c(k, l) = rng.gaussian();
  const TensorSurface s(bx, by, c);
  for (int trial = 0; trial < 200; ++trial) {
    const double x = rng.uniform(-2.0, 2.0);
    const double y = rng.uniform(-1.0, 3.0);
    const auto [vx, dx] = bx.eval_with_deriv(x);
    const auto [vy, dy] = by.eval_with_deriv(y);
    double naive = 0.0, gx = 0.0, gy = 0.0;
    for (int k = 0; k < 7; ++k)
      for (int l = 0; l < 9; ++l) {
        naive += c(k, l) * vx[k] * vy[l];
        gx += c(k, l) * dx[k] * vy[l];
        gy += c(k, l) * vx[k] * dy[l];
      }
    CHECK(s.eval(x, y) == doctest::Approx(naive).epsilon(1e-12));
    const Vec2 g = s.grad(x, y);
    CHECK(g[0] == doctest::Approx(gx).epsilon(1e-10));
    CHECK(g[1] == doctest::Approx(gy).epsilon(1e-10));
  }
  // Central finite differences on the surface itself.
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    const double x = rng.uniform(-1.9, 1.9);
    const double y = rng.uniform(-0.9, 2.9);
    const Vec2 g = s.grad(x, y);
    CHECK(std::abs(g[0] - (s.eval(x + h, y) - s.eval(x - h, y)) / (2 * h)) < 1e-6);
    CHECK(std::abs(g[1] - (s.eval(x, y + h) - s.eval(x, y - h)) / (2 * h)) < 1e-6);
  }
}

TEST_CASE("constant coefficient surface is flat with zero gradient") {
  const SplineBasis b(4, 8, 0.0, 1.0);
  const TensorSurface s(b, b, Matrix::Constant(8, 8, 2.5));
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const double x = rng.uniform(), y = rng.uniform();
    CHECK(s.eval(x, y) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(std::abs(s.grad(x, y)[0]) < 1e-10);
    CHECK(std::abs(s.grad(x, y)[1]) < 1e-10);
  }
}

TEST_CASE("wall repulsion matches the four-exponential formula and FD") {
  const WallField w(0.0, 65.0, 0.0, 160.0, 0.08);
  Rng rng(9);
  const double h = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    const double x = rng.uniform(1.0, 64.0), y = rng.uniform(1.0, 159.0);
    const auto g = w.eval_grad(x, y);
    const double r = 0.08;
    const double expected = std::exp(-r * x) + std::exp(r * (x - 65.0)) +
                            std::exp(-r * y) + std::exp(r * (y - 160.0));
    CHECK(g.value == doctest::Approx(expected).epsilon(1e-12));
    const double fx = (w.eval_grad(x + h, y).value - w.eval_grad(x - h, y).value) / (2 * h);
    const double fy = (w.eval_grad(x, y + h).value - w.eval_grad(x, y - h).value) / (2 * h);
    CHECK(g.gx == doctest::Approx(fx).epsilon(1e-5));
    CHECK(g.gy == doctest::Approx(fy).epsilon(1e-5));
  }
  CHECK_THROWS_AS(WallField(0, 1, 0, 1, -0.1), std::invalid_argument);
}

TEST_CASE("sum_to_zero: constraint, idempotence, and mean preservation") {
  const int n = 20;
  Rng rng(17);
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.gaussian();
  const Matrix sigma = a * a.transpose() + 0.1 * Matrix::Identity(n, n);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.gaussian();

  const Vector p = sum_to_zero(v, sigma);
  CHECK(std::abs(p.sum()) < 1e-9);
  const Vector p2 = sum_to_zero(p, sigma);
  CHECK((p2 - p).cwiseAbs().maxCoeff() < 1e-9);
  // The projection shifts along Sigma 1 only.
  const Vector dir = sigma * Vector::Ones(n);
  const Vector resid = v - p;
  CHECK((resid - dir * (resid.dot(dir) / dir.squaredNorm())).norm() < 1e-8);
}

TEST_CASE("sum_to_zero Monte Carlo: projected draws keep sum zero exactly") {
  const int n = 12;
  Rng rng(23);
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.gaussian();
  const Matrix sigma = a * a.transpose() + Matrix::Identity(n, n);
  const Eigen::LLT<Matrix> llt(sigma);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    Vector z(n);
    for (int i = 0; i < n; ++i) z[i] = rng.gaussian();
    const Vector draw = llt.matrixL() * z;
    worst = std::max(worst, std::abs(sum_to_zero(draw, sigma).sum()));
  }
  CHECK(worst < 1e-10);
}
