#include "svsde/sde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace svsde {

DriftFields fields_from_surfaces(const TensorSurface& h, const TensorSurface& m,
                                 const std::optional<WallField>& wall) {
  const double hx0 = h.basis_x.lo(), hx1 = h.basis_x.hi();
  const double hy0 = h.basis_y.lo(), hy1 = h.basis_y.hi();
  const double mx0 = m.basis_x.lo(), mx1 = m.basis_x.hi();
  const double my0 = m.basis_y.lo(), my1 = m.basis_y.hi();
  DriftFields f;
  f.potential_grad = [h, wall, hx0, hx1, hy0, hy1](double x, double y) -> Vec2 {
    Vec2 g = h.grad(std::clamp(x, hx0, hx1), std::clamp(y, hy0, hy1));
    if (wall) {
      const auto wg = wall->eval_grad(x, y);
      g[0] += wg.gx;
      g[1] += wg.gy;
    }
    return g;
  };
  f.motility = [m, mx0, mx1, my0, my1](double x, double y) {
    return m.eval(std::clamp(x, mx0, mx1), std::clamp(y, my0, my1));
  };
  return f;
}

DriftFields fields_analytic(std::function<Vec2(double, double)> spline_grad,
                            std::function<double(double, double)> motility,
                            const std::optional<WallField>& wall) {
  DriftFields f;
  f.potential_grad = [g = std::move(spline_grad), wall](double x, double y) -> Vec2 {
    Vec2 v = g(x, y);
    if (wall) {
      const auto wg = wall->eval_grad(x, y);
      v[0] += wg.gx;
      v[1] += wg.gy;
    }
    return v;
  };
  f.motility = std::move(motility);
  return f;
}

SimState em_step(const SimState& s, const ModelParams& p, const DriftFields& f,
                 double delta, Rng& rng) {
  if (!(delta > 0.0)) throw std::invalid_argument("em_step: delta must be > 0");
  const Vec2 g = f.potential_grad(s.x, s.y);
  const double m = f.motility(s.x, s.y);
  const double sv = std::sqrt(p.sigma2 * delta);
  const double sl = std::sqrt(p.kappa2 * delta);
  SimState n;
  n.vx = s.vx + p.beta * (-g[0] - s.vx) * delta + sv * rng.gaussian();
  n.vy = s.vy + p.beta * (-g[1] - s.vy) * delta + sv * rng.gaussian();
  n.x = s.x + m * s.vx * delta + sl * rng.gaussian();
  n.y = s.y + m * s.vy * delta + sl * rng.gaussian();
  return n;
}

SimPath simulate(const SimConfig& config, const ModelParams& params) {
  if (config.n_steps < 0) throw std::invalid_argument("simulate: n_steps < 0");
  if (config.truncate_walls && !config.geometry)
    throw std::invalid_argument("simulate: truncation requires a geometry");
  Rng rng(config.seed);
  SimPath path;
  path.delta = config.delta;
  path.states.reserve(config.n_steps + 1);
  path.states.push_back(config.initial);
  SimState s = config.initial;
  for (long i = 0; i < config.n_steps; ++i) {
    SimState n = em_step(s, params, config.fields, config.delta, rng);
    if (config.truncate_walls) n = truncate_to_walls(s, n, *config.geometry);
    if (!std::isfinite(n.x) || !std::isfinite(n.y) || !std::isfinite(n.vx) ||
        !std::isfinite(n.vy))
      throw std::runtime_error("simulate: non-finite state at step " +
                               std::to_string(i + 1));
    path.states.push_back(n);
    s = n;
  }
  return path;
}

SimState truncate_to_walls(const SimState& from, const SimState& proposed,
                           const NestGeometry& geometry) {
  if (!geometry.contains(from.x, from.y))
    throw std::invalid_argument("truncate_to_walls: `from` outside geometry");
  const Vec2 p(from.x, from.y);
  const Vec2 q(proposed.x, proposed.y);
  double t_hit = std::numeric_limits<double>::infinity();
  for (const auto& w : geometry.solid) {
    if (auto t = segment_intersection(p, q, w)) t_hit = std::min(t_hit, *t);
  }
  if (!std::isfinite(t_hit)) return proposed;
  const Vec2 d = q - p;
  const double len = d.norm();
  const double eps = 1e-6;
  double t_back = t_hit;
  if (len > 0.0) t_back = std::max(0.0, t_hit - eps / len);
  const Vec2 hit = p + t_back * d;
  SimState out = proposed;
  out.x = hit.x();
  out.y = hit.y();
  return out;
}

Matrix first_passage(const NestGeometry& geometry, const SimConfig& config,
                     const ModelParams& params, int n_agents, const Vec2& start) {
  if (!geometry.contains(start.x(), start.y()))
    throw std::invalid_argument("first_passage: start outside geometry");
  const int n_sections = static_cast<int>(geometry.sections.size());
  const double inf = std::numeric_limits<double>::infinity();
  Matrix entry = Matrix::Constant(n_agents, n_sections, inf);

  for (int a = 0; a < n_agents; ++a) {
    Rng rng(config.seed, static_cast<std::uint64_t>(a));
    SimState s;
    s.x = start.x();
    s.y = start.y();
    const double sd_v = std::sqrt(params.tau_v1);
    s.vx = sd_v * rng.gaussian();
    s.vy = sd_v * rng.gaussian();
    int remaining = n_sections;
    {
      const int sec = geometry.section_of(s.x, s.y);
      if (sec >= 0) {
        entry(a, sec) = 0.0;
        --remaining;
      }
    }
    for (long i = 0; i < config.n_steps && remaining > 0; ++i) {
      SimState n = em_step(s, params, config.fields, config.delta, rng);
      n = truncate_to_walls(s, n, geometry);
      if (!std::isfinite(n.x) || !std::isfinite(n.y))
        throw std::runtime_error("first_passage: non-finite state, agent " +
                                 std::to_string(a));
      const int sec = geometry.section_of(n.x, n.y);
      if (sec >= 0 && !std::isfinite(entry(a, sec))) {
        entry(a, sec) = (i + 1) * config.delta;
        --remaining;
      }
      s = n;
    }
  }
  return entry;
}

}  // namespace svsde
