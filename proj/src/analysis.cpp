#include "svsde/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

namespace svsde {

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * (values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo + 1 >= values.size()) return values.back();
  const double w = pos - lo;
  return (1.0 - w) * values[lo] + w * values[lo + 1];
}

ChainSummary summarize(const std::vector<double>& draws) {
  if (draws.empty()) throw std::invalid_argument("summarize: empty chain");
  ChainSummary s;
  for (double v : draws) s.mean += v;
  s.mean /= draws.size();
  s.lower = quantile(draws, 0.025);
  s.upper = quantile(draws, 0.975);
  s.mcse = draws.size() >= 4 ? batch_means_mcse(draws) : 0.0;
  return s;
}

namespace {

// Dense basis rows for every grid point: values and x/y-derivatives of the
// K*L tensor functions.
struct GridDesign {
  Vector gx, gy;
  Matrix value, ddx, ddy;  // (nx*ny) x (K*L), row index i * ny + j
};

GridDesign grid_design(const PosteriorChain& chain, int nx, int ny, double x_lo,
                       double x_hi, double y_lo, double y_hi) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("posterior_surfaces: grid too small");
  const SplineBasis bx = chain.make_basis_x();
  const SplineBasis by = chain.make_basis_y();
  if (x_lo < bx.lo() || x_hi > bx.hi() || y_lo < by.lo() || y_hi > by.hi() ||
      !(x_lo < x_hi) || !(y_lo < y_hi))
    throw std::invalid_argument("posterior_surfaces: grid bounds outside spline domain");
  const int K = bx.count(), L = by.count();
  GridDesign g;
  g.gx = Vector::LinSpaced(nx, x_lo, x_hi);
  g.gy = Vector::LinSpaced(ny, y_lo, y_hi);
  g.value.resize(nx * ny, K * L);
  g.ddx.resize(nx * ny, K * L);
  g.ddy.resize(nx * ny, K * L);
  for (int i = 0; i < nx; ++i) {
    const auto [vx, dx] = bx.eval_with_deriv(g.gx[i]);
    for (int j = 0; j < ny; ++j) {
      const auto [vy, dy] = by.eval_with_deriv(g.gy[j]);
      const long row = static_cast<long>(i) * ny + j;
      for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l) {
          g.value(row, k * L + l) = vx[k] * vy[l];
          g.ddx(row, k * L + l) = dx[k] * vy[l];
          g.ddy(row, k * L + l) = vx[k] * dy[l];
        }
    }
  }
  return g;
}

SurfaceSummary summarize_draws(const Matrix& point_draws, int nx, int ny) {
  // point_draws: retained x (nx*ny)
  SurfaceSummary s;
  s.mean.resize(nx, ny);
  s.lower.resize(nx, ny);
  s.upper.resize(nx, ny);
  std::vector<double> col(point_draws.rows());
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const long row = static_cast<long>(i) * ny + j;
      for (Eigen::Index r = 0; r < point_draws.rows(); ++r)
        col[r] = point_draws(r, row);
      s.mean(i, j) = point_draws.col(row).mean();
      s.lower(i, j) = quantile(col, 0.025);
      s.upper(i, j) = quantile(col, 0.975);
    }
  return s;
}

}  // namespace

PosteriorSurfaces posterior_surfaces(const PosteriorChain& chain, int nx, int ny) {
  return posterior_surfaces(chain, nx, ny, chain.config.x_lo, chain.config.x_hi,
                            chain.config.y_lo, chain.config.y_hi);
}

PosteriorSurfaces posterior_surfaces(const PosteriorChain& chain, int nx, int ny,
                                     double x_lo, double x_hi, double y_lo,
                                     double y_hi) {
  if (chain.retained() == 0) throw std::invalid_argument("posterior_surfaces: empty chain");
  const GridDesign g = grid_design(chain, nx, ny, x_lo, x_hi, y_lo, y_hi);
  PosteriorSurfaces out;
  out.grid_x = g.gx;
  out.grid_y = g.gy;
  out.potential = summarize_draws(chain.gamma_draws * g.value.transpose(), nx, ny);
  out.motility = summarize_draws(chain.alpha_draws * g.value.transpose(), nx, ny);

  const Vector gamma_mean = chain.gamma_draws.colwise().mean();
  const Vector alpha_mean = chain.alpha_draws.colwise().mean();
  out.drift_x.resize(nx, ny);
  out.drift_y.resize(nx, ny);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const long row = static_cast<long>(i) * ny + j;
      const double m = g.value.row(row).dot(alpha_mean);
      out.drift_x(i, j) = -g.ddx.row(row).dot(gamma_mean) * m;
      out.drift_y(i, j) = -g.ddy.row(row).dot(gamma_mean) * m;
    }
  return out;
}

ChainSummary motility_at(const PosteriorChain& chain, double x, double y) {
  if (chain.retained() == 0) throw std::invalid_argument("motility_at: empty chain");
  const SplineBasis bx = chain.make_basis_x();
  const SplineBasis by = chain.make_basis_y();
  const int L = by.count();
  const auto [vx, dx] = bx.eval_with_deriv(x);
  const auto [vy, dy] = by.eval_with_deriv(y);
  Vector design(bx.count() * L);
  for (int k = 0; k < bx.count(); ++k)
    for (int l = 0; l < L; ++l) design[k * L + l] = vx[k] * vy[l];
  std::vector<double> draws(chain.retained());
  for (long r = 0; r < chain.retained(); ++r)
    draws[r] = chain.alpha_draws.row(r).dot(design);
  return summarize(draws);
}

double one_step_error(const PosteriorChain& chain, const TrajectorySet& data,
                      FitVariant variant) {
  if (chain.config.variant != variant)
    throw std::invalid_argument("one_step_error: chain was fit under a different variant");
  if (chain.velocity_draws.empty())
    throw std::invalid_argument("one_step_error: chain has no velocity snapshots");
  const SplineBasis bx = chain.make_basis_x();
  const SplineBasis by = chain.make_basis_y();
  const double delta = chain.delta;
  const double sigma2 = 1.0;  // fixed for identifiability
  // Genuine one-step-ahead forecasts: the velocity for transition i is
  // propagated from the draw's velocity at i-1 through the fitted drift plus
  // a sigma innovation, then the location update adds the kappa noise. Using
  // the draw's own velocity at i would leak the transition being predicted
  // (the smoothed velocities interpolate the displacements).
  Rng rng(chain.config.seed ^ 0x5e1fca5eull);
  double sum = 0.0;
  long count = 0;
  for (const auto& [kept, vels] : chain.velocity_draws) {
    Matrix mcoef(chain.config.basis_k, chain.config.basis_l);
    Matrix hcoef(chain.config.basis_k, chain.config.basis_l);
    for (int k = 0; k < chain.config.basis_k; ++k)
      for (int l = 0; l < chain.config.basis_l; ++l) {
        mcoef(k, l) = chain.alpha_draws(kept, k * chain.config.basis_l + l);
        hcoef(k, l) = chain.gamma_draws(kept, k * chain.config.basis_l + l);
      }
    const TensorSurface m(bx, by, std::move(mcoef));
    const TensorSurface h(bx, by, std::move(hcoef), true);
    std::optional<WallField> wall;
    if (chain.config.wall_enabled)
      wall.emplace(chain.config.wall_x_lo, chain.config.wall_x_hi,
                   chain.config.wall_y_lo, chain.config.wall_y_hi,
                   chain.r1[kept]);
    const double beta = chain.beta[kept];
    const double sd_v = std::sqrt(sigma2 * delta);
    const double sd_x = std::sqrt(chain.kappa2[kept] * delta);
    std::size_t s = 0;
    for (const auto& ind : data.individuals)
      for (const auto& seg : ind.segments) {
        if (s >= vels.size())
          throw std::invalid_argument("one_step_error: snapshot/data segment mismatch");
        const Matrix& v = vels[s++];
        if (v.rows() != static_cast<Eigen::Index>(seg.size()))
          throw std::invalid_argument("one_step_error: snapshot length mismatch");
        for (std::size_t i = 1; i + 1 < seg.size(); ++i) {
          const double px = std::clamp(seg[i - 1].x, bx.lo(), bx.hi());
          const double py = std::clamp(seg[i - 1].y, by.lo(), by.hi());
          Vec2 g = h.grad(px, py);
          if (wall) {
            const auto wx = wall->eval_grad(seg[i - 1].x, seg[i - 1].y);
            g[0] += wx.gx;
            g[1] += wx.gy;
          }
          const double vhx = v(i - 1, 0) + beta * (-g[0] - v(i - 1, 0)) * delta +
                             sd_v * rng.gaussian();
          const double vhy = v(i - 1, 1) + beta * (-g[1] - v(i - 1, 1)) * delta +
                             sd_v * rng.gaussian();
          const double cx = std::clamp(seg[i].x, bx.lo(), bx.hi());
          const double cy = std::clamp(seg[i].y, by.lo(), by.hi());
          const double mv = m.eval(cx, cy);
          const double ex = seg[i + 1].x -
                            (seg[i].x + mv * vhx * delta + sd_x * rng.gaussian());
          const double ey = seg[i + 1].y -
                            (seg[i].y + mv * vhy * delta + sd_x * rng.gaussian());
          sum += std::sqrt(ex * ex + ey * ey);
          count += 1;
        }
      }
  }
  if (count == 0) throw std::invalid_argument("one_step_error: no transitions");
  return sum / count;
}

std::vector<ThinRow> thinning_study(const SimConfig& base, const ModelParams& params,
                                    const FitConfig& fit,
                                    const std::vector<int>& factors,
                                    int n_individuals) {
  if (factors.empty()) throw std::invalid_argument("thinning_study: no factors");
  if (n_individuals < 1) throw std::invalid_argument("thinning_study: need individuals");
  std::vector<ThinRow> rows;
  for (int factor : factors) {
    std::vector<TrajectorySet> sets;
    for (int j = 0; j < n_individuals; ++j) {
      SimConfig sim = base;
      sim.n_steps = base.n_steps * factor;  // constant retained count
      sim.seed = base.seed + static_cast<std::uint64_t>(j);
      const SimPath path = simulate(sim, params);
      sets.push_back(thin_path(path, factor, "ind" + std::to_string(j)));
    }
    const TrajectorySet data = merge_trajectories(sets);
    const PosteriorChain chain = run_chain(data, fit);
    ThinRow row;
    row.factor = factor;
    row.delta = data.delta;
    std::vector<double> bd(chain.beta.size()), kd(chain.kappa2.size());
    for (std::size_t i = 0; i < chain.beta.size(); ++i) {
      bd[i] = chain.beta[i] * data.delta;
      kd[i] = chain.kappa2[i] * data.delta;
    }
    row.beta_delta = summarize(bd);
    row.kappa2 = summarize(chain.kappa2);
    row.kappa2_delta = summarize(kd);
    rows.push_back(std::move(row));
  }
  return rows;
}

TrajectorySet thin_path(const SimPath& path, int factor, const std::string& id) {
  if (factor < 1) throw std::invalid_argument("thin_path: factor must be >= 1");
  TrajectorySet set;
  set.delta = path.delta * factor;
  Segment seg;
  long t = 0;
  for (std::size_t i = 0; i < path.states.size(); i += factor)
    seg.push_back({t++, path.states[i].x, path.states[i].y});
  if (seg.size() < 3) throw std::invalid_argument("thin_path: thinned path too short");
  set.individuals.push_back({id, {std::move(seg)}});
  return set;
}

TrajectorySet merge_trajectories(const std::vector<TrajectorySet>& sets) {
  if (sets.empty()) throw std::invalid_argument("merge_trajectories: no inputs");
  TrajectorySet out;
  out.delta = sets.front().delta;
  for (const auto& s : sets) {
    if (std::abs(s.delta - out.delta) > 1e-12)
      throw std::invalid_argument("merge_trajectories: mismatched deltas");
    for (const auto& ind : s.individuals) out.individuals.push_back(ind);
  }
  return out;
}

}  // namespace svsde
