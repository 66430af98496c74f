#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "svsde/geometry.hpp"
#include "svsde/sde.hpp"

using namespace svsde;

namespace {

DriftFields quadratic_fields() {
  // H = x^2 + y^2, constant motility.
  return fields_analytic([](double x, double y) { return Vec2(2 * x, 2 * y); },
                         [](double, double) { return 1.0; }, std::nullopt);
}

DriftFields flat_fields(double motility = 1.0) {
  return fields_analytic([](double, double) { return Vec2(0.0, 0.0); },
                         [motility](double, double) { return motility; },
                         std::nullopt);
}

}  // namespace

TEST_CASE("noise-free step reproduces the discretized update by hand") {
  ModelParams p;
  p.beta = 1.5;
  p.sigma2 = 1e-30;
  p.kappa2 = 1e-30;
  const DriftFields f = fields_analytic(
      [](double x, double y) { return Vec2(2 * x, 2 * y); },
      [](double x, double y) { return (x > 0 && y > 0) ? 0.25 : 1.0; },
      std::nullopt);
  Rng rng(1);
  const SimState s{0.8, 0.6, 0.3, -0.2};
  const SimState n = em_step(s, p, f, 0.1, rng);
  // v' = v + beta (-grad H - v) delta
  CHECK(n.vx == doctest::Approx(0.3 + 1.5 * (-1.6 - 0.3) * 0.1).epsilon(1e-9));
  CHECK(n.vy == doctest::Approx(-0.2 + 1.5 * (-1.2 + 0.2) * 0.1).epsilon(1e-9));
  // Location update uses the pre-update velocity and M at the old point.
  CHECK(n.x == doctest::Approx(0.8 + 0.25 * 0.3 * 0.1).epsilon(1e-9));
  CHECK(n.y == doctest::Approx(0.6 + 0.25 * (-0.2) * 0.1).epsilon(1e-9));
  CHECK_THROWS_AS(em_step(s, p, f, 0.0, rng), std::invalid_argument);
}

TEST_CASE("noise scales: increment variances match sigma^2 delta, kappa^2 delta") {
  ModelParams p;
  p.beta = 0.0;  // pure noise in the velocity equation
  p.sigma2 = 2.0;
  p.kappa2 = 0.5;
  const DriftFields f = flat_fields(0.0);  // location becomes pure noise too
  const double delta = 0.2;
  Rng rng(77);
  SimState s{0, 0, 0, 0};
  const int n = 200000;
  double sv = 0, sl = 0;
  for (int i = 0; i < n; ++i) {
    const SimState t = em_step(s, p, f, delta, rng);
    sv += t.vx * t.vx + t.vy * t.vy;
    sl += t.x * t.x + t.y * t.y;
  }
  CHECK(sv / (2 * n) == doctest::Approx(p.sigma2 * delta).epsilon(0.02));
  CHECK(sl / (2 * n) == doctest::Approx(p.kappa2 * delta).epsilon(0.02));
}

TEST_CASE("motility/velocity rescaling leaves the location mean unchanged") {
  // (M, v) -> (c M, v / c) gives the identical mean location update.
  ModelParams p;
  p.sigma2 = 1e-30;
  p.kappa2 = 1e-30;
  p.beta = 0.0;
  const double c = 3.7;
  Rng r1(5), r2(5);
  const SimState a{1.0, -2.0, 0.4, 0.9};
  SimState b = a;
  b.vx /= c;
  b.vy /= c;
  const SimState na = em_step(a, p, flat_fields(1.0), 0.1, r1);
  const SimState nb = em_step(b, p, flat_fields(c), 0.1, r2);
  CHECK(std::abs(na.x - nb.x) < 1e-10);
  CHECK(std::abs(na.y - nb.y) < 1e-10);
}

TEST_CASE("velocity process reaches the OU stationary variance") {
  ModelParams p;
  p.beta = 1.5;
  p.sigma2 = 1.0;
  p.kappa2 = 1e-6;
  SimConfig cfg;
  cfg.delta = 0.01;
  cfg.n_steps = 200000;
  cfg.seed = 31;
  cfg.fields = flat_fields();
  const SimPath path = simulate(cfg, p);
  double acc = 0.0;
  long n = 0;
  for (std::size_t i = 1000; i < path.states.size(); ++i) {
    acc += path.states[i].vx * path.states[i].vx +
           path.states[i].vy * path.states[i].vy;
    n += 2;
  }
  // Discrete AR(1) stationary variance sigma^2 delta / (1 - (1 - beta
  // delta)^2), within MC error of sigma^2 / (2 beta).
  CHECK(acc / n == doctest::Approx(1.0 / 3.0).epsilon(0.05));
}

TEST_CASE("simulate is deterministic given the seed") {
  ModelParams p;
  p.beta = 1.0;
  SimConfig cfg;
  cfg.delta = 0.1;
  cfg.n_steps = 500;
  cfg.seed = 12345;
  cfg.fields = quadratic_fields();
  const SimPath a = simulate(cfg, p);
  const SimPath b = simulate(cfg, p);
  REQUIRE(a.states.size() == 501);
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    CHECK(a.states[i].x == b.states[i].x);
    CHECK(a.states[i].vy == b.states[i].vy);
  }
  cfg.seed = 12346;
  const SimPath c = simulate(cfg, p);
  CHECK(a.states.back().x != c.states.back().x);
}

TEST_CASE("simulate reports the step index on numeric blow-up") {
  ModelParams p;
  SimConfig cfg;
  cfg.delta = 0.1;
  cfg.n_steps = 10;
  cfg.fields = fields_analytic(
      [](double, double) { return Vec2(std::nan(""), 0.0); },
      [](double, double) { return 1.0; }, std::nullopt);
  CHECK_THROWS_WITH_AS(simulate(cfg, p), "simulate: non-finite state at step 1",
                       std::runtime_error);
}

TEST_CASE("wall truncation pulls a crossing back to the wall") {
  NestGeometry g;
  g.x_lo = 0;
  g.y_lo = 0;
  g.x_hi = 10;
  g.y_hi = 10;
  g.walls.push_back({{0.0, 5.0}, {10.0, 5.0}});
  g.doorways.push_back({{4.0, 5.0}, {6.0, 5.0}});
  g.finalize();

  const SimState from{2.0, 4.0, 0.0, 1.0};
  SimState prop = from;
  prop.y = 6.0;  // crosses the wall away from the door
  const SimState cut = truncate_to_walls(from, prop, g);
  CHECK(cut.y < 5.0);
  CHECK(cut.y > 4.99);
  CHECK(cut.vx == prop.vx);  // velocity carried over

  // Through the door: unchanged.
  const SimState from2{5.0, 4.0, 0.0, 1.0};
  SimState prop2 = from2;
  prop2.y = 6.0;
  const SimState pass = truncate_to_walls(from2, prop2, g);
  CHECK(pass.y == 6.0);

  // No crossing: unchanged.
  SimState prop3 = from;
  prop3.y = 4.5;
  CHECK(truncate_to_walls(from, prop3, g).y == 4.5);

  SimState outside{20.0, 20.0, 0.0, 0.0};
  CHECK_THROWS_AS(truncate_to_walls(outside, prop, g), std::invalid_argument);
}

TEST_CASE("wall-truncated simulation stays inside the nest") {
  const NestGeometry g = four_chamber_nest();
  ModelParams p;
  p.beta = 0.5;
  p.sigma2 = 25.0;  // lively enough to hit walls
  p.kappa2 = 0.25;
  SimConfig cfg;
  cfg.delta = 0.1;
  cfg.n_steps = 5000;
  cfg.seed = 7;
  cfg.initial = {32.0, 80.5, 0.0, 0.0};
  cfg.truncate_walls = true;
  cfg.geometry = g;
  cfg.fields = flat_fields();
  const SimPath path = simulate(cfg, p);
  for (const auto& s : path.states) CHECK(g.contains(s.x, s.y));
}

TEST_CASE("first passage: start section at time zero, dims, determinism") {
  const NestGeometry g = four_chamber_nest();
  ModelParams p;
  p.beta = 0.5;
  p.sigma2 = 25.0;
  p.kappa2 = 0.25;
  p.tau_v1 = 1.0;
  SimConfig cfg;
  cfg.delta = 0.1;
  cfg.n_steps = 2000;
  cfg.seed = 99;
  cfg.fields = flat_fields();
  const Vec2 start(10.0, 10.0);  // inside IVb
  const Matrix entry = first_passage(g, cfg, p, 8, start);
  REQUIRE(entry.rows() == 8);
  REQUIRE(entry.cols() == 8);
  for (int a = 0; a < 8; ++a) CHECK(entry(a, 0) == 0.0);  // IVb column
  // Entries are step multiples of delta or infinity.
  for (int a = 0; a < 8; ++a)
    for (int s = 1; s < 8; ++s) {
      const double e = entry(a, s);
      if (std::isfinite(e)) {
        CHECK(e > 0.0);
        CHECK(std::abs(e / cfg.delta - std::round(e / cfg.delta)) < 1e-9);
      }
    }
  const Matrix again = first_passage(g, cfg, p, 8, start);
  CHECK((entry - again).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(first_passage(g, cfg, p, 2, Vec2(100.0, 100.0)),
                  std::invalid_argument);
}
