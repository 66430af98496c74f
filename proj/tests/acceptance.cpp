// Acceptance harness: one pass/fail line per criterion, exit code = number
// of failures. Criteria 1/3/4 share one simulated data set and a full-model
// fit; the remaining criteria are self-contained.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "svsde/analysis.hpp"
#include "svsde/car.hpp"
#include "svsde/geometry.hpp"
#include "svsde/inference.hpp"
#include "svsde/sde.hpp"
#include "svsde/spline.hpp"

using namespace svsde;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double elapsed_s(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

DriftFields quadrant_fields() {
  return fields_analytic(
      [](double x, double y) { return Vec2(2.0 * x, 2.0 * y); },
      [](double x, double y) { return (x > 0 && y > 0) ? 0.25 : 1.0; },
      std::nullopt);
}

DriftFields shallow_fields() {
  return fields_analytic(
      [](double x, double y) { return Vec2(0.1 * x, 0.1 * y); },
      [](double x, double y) {
        return std::max(0.0, 1.0 - 0.25 * (std::abs(x) + std::abs(y)));
      },
      std::nullopt);
}

TrajectorySet simulate_set(const SimConfig& base, const ModelParams& params,
                           int n_individuals, std::uint64_t seed) {
  std::vector<TrajectorySet> sets;
  for (int j = 0; j < n_individuals; ++j) {
    SimConfig cfg = base;
    cfg.seed = seed + static_cast<std::uint64_t>(j);
    sets.push_back(thin_path(simulate(cfg, params), 1, "ind" + std::to_string(j)));
  }
  return merge_trajectories(sets);
}

void bounding_box(const TrajectorySet& data, double margin, double& x_lo,
                  double& x_hi, double& y_lo, double& y_hi) {
  x_lo = y_lo = 1e300;
  x_hi = y_hi = -1e300;
  for (const auto& ind : data.individuals)
    for (const auto& seg : ind.segments)
      for (const auto& obs : seg) {
        x_lo = std::min(x_lo, obs.x);
        x_hi = std::max(x_hi, obs.x);
        y_lo = std::min(y_lo, obs.y);
        y_hi = std::max(y_hi, obs.y);
      }
  x_lo -= margin;
  x_hi += margin;
  y_lo -= margin;
  y_hi += margin;
}

// --- criteria 1, 3, 4: simulate-and-recover on the quadrant-well scenario ---
//
// The fit basis is denser than desk scale (24x24 over the data bounding box
// rather than 8x8): the discontinuous motility surface is smoothed over a
// knot-spacing-wide band, and at 8x8 the induced attenuation biases the
// posterior for beta upward by ~0.08, past its credible width. The reference
// results (beta 1.496, kappa^2 0.0109) were produced with a dense basis, and
// the kappa^2 inflation to ~0.0109 reproduces here at every resolution.
void criteria_1_3_4() {
  const auto t0 = Clock::now();
  ModelParams truth;
  truth.beta = 1.5;
  truth.sigma2 = 1.0;
  truth.kappa2 = 0.01;

  SimConfig base;
  base.delta = 0.1;
  base.n_steps = 5999;
  base.fields = quadrant_fields();
  const TrajectorySet data = simulate_set(base, truth, 5, 100);

  FitConfig fit;
  fit.basis_k = 24;
  fit.basis_l = 24;
  bounding_box(data, 0.05, fit.x_lo, fit.x_hi, fit.y_lo, fit.y_hi);
  fit.iterations = 8000;
  fit.burn_in = 3000;
  fit.thin = 1;
  fit.velocity_draw_stride = 50;
  fit.seed = 42;

  const PosteriorChain full = run_chain(data, fit);
  const double fit_s = elapsed_s(t0);

  const ChainSummary beta = summarize(full.beta);
  const ChainSummary kappa2 = summarize(full.kappa2);
  const bool c1 = beta.lower <= 1.5 && 1.5 <= beta.upper &&
                  kappa2.mean >= 0.009 && kappa2.mean <= 0.013 &&
                  fit_s < 1800.0;
  report(1, c1,
         fmt("sim-recover: beta CI (%.3f, %.3f) vs 1.5, kappa2 mean %.4f in "
             "[0.009, 0.013], %.0f s < 1800 s",
             beta.lower, beta.upper, kappa2.mean, fit_s));

  const ChainSummary m_hi = motility_at(full, -0.5, -0.5);
  const ChainSummary m_lo = motility_at(full, 0.5, 0.5);
  const bool c3 = m_lo.upper < m_hi.lower;
  report(3, c3,
         fmt("motility shape: M(0.5,0.5) band (%.3f, %.3f) below "
             "M(-0.5,-0.5) band (%.3f, %.3f)",
             m_lo.lower, m_lo.upper, m_hi.lower, m_hi.upper));

  FitConfig vfit = fit;
  vfit.iterations = 5000;
  vfit.burn_in = 2000;
  vfit.seed = 43;
  vfit.variant = FitVariant::no_potential;
  const PosteriorChain no_pot = run_chain(data, vfit);
  vfit.seed = 44;
  vfit.variant = FitVariant::no_motility;
  const PosteriorChain no_mot = run_chain(data, vfit);

  const double e_full = one_step_error(full, data, FitVariant::full);
  const double e_nopot = one_step_error(no_pot, data, FitVariant::no_potential);
  const double e_nomot = one_step_error(no_mot, data, FitVariant::no_motility);
  const bool c4 = e_full < e_nopot && e_nopot < e_nomot;
  report(4, c4,
         fmt("one-step error ordering: full %.5f < no-potential %.5f < "
             "no-motility %.5f",
             e_full, e_nopot, e_nomot));
}

// --- criterion 2: thinning / discretization-error study ---
void criterion_2() {
  ModelParams truth;
  truth.beta = 0.8;
  truth.sigma2 = 1.0;
  truth.kappa2 = 1e-4;

  SimConfig base;
  base.delta = 0.1;
  base.n_steps = 4999;
  base.seed = 300;
  base.fields = shallow_fields();

  FitConfig fit;
  fit.basis_k = 8;
  fit.basis_l = 8;
  fit.x_lo = fit.y_lo = -4.5;
  fit.x_hi = fit.y_hi = 4.5;
  fit.iterations = 3000;
  fit.burn_in = 1000;
  fit.velocity_draw_stride = 1000;
  fit.seed = 7;

  const auto rows = thinning_study(base, truth, fit, {1, 5, 10}, 10);
  const double bd1 = rows[0].beta_delta.mean;
  const double bd5 = rows[1].beta_delta.mean;
  const double bd10 = rows[2].beta_delta.mean;
  const bool pass = bd1 < bd5 && bd5 < bd10 && std::abs(bd1 - 0.080) <= 0.02;
  report(2, pass,
         fmt("thinning: beta*delta %.4f < %.4f < %.4f, factor-1 within "
             "0.080 +/- 0.02",
             bd1, bd5, bd10));
}

// --- criterion 5: ratio-oracle suite on a tiny instance ---
void criterion_5() {
  const auto t0 = Clock::now();
  ModelParams truth;
  truth.beta = 1.5;
  truth.sigma2 = 1.0;
  truth.kappa2 = 0.01;
  SimConfig base;
  base.delta = 0.1;
  base.n_steps = 49;
  base.fields = quadrant_fields();
  const TrajectorySet data = simulate_set(base, truth, 2, 500);

  FitConfig cfg;
  cfg.basis_k = 4;
  cfg.basis_l = 4;
  cfg.x_lo = cfg.y_lo = -3;
  cfg.x_hi = cfg.y_hi = 3;
  cfg.seed = 1;

  GibbsSampler s(data, cfg);
  Rng rng(77);
  s.sweep(rng);

  const auto normal_lp = [](double x, double m, double v) {
    return -0.5 * (std::log(v) + (x - m) * (x - m) / v);
  };
  double worst = 0;
  const auto check = [&](double got, double want) {
    worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
  };

  for (int pair = 0; pair < 100; ++pair) {
    {  // beta
      const auto c = s.beta_conditional();
      const double b1 = rng.uniform(0.1, 3.0), b2 = rng.uniform(0.1, 3.0);
      s.params().beta = b1;
      const double lj1 = s.log_joint_oracle();
      s.params().beta = b2;
      const double lj2 = s.log_joint_oracle();
      check(lj1 - lj2, normal_lp(b1, c.mean, c.var) - normal_lp(b2, c.mean, c.var));
    }
    {  // kappa2
      const auto c = s.kappa2_conditional();
      const double k1 = rng.uniform(0.001, 0.1), k2 = rng.uniform(0.001, 0.1);
      const auto ig = [&](double x) {
        return -(c.shape + 1) * std::log(x) - c.rate / x;
      };
      s.params().kappa2 = k1;
      const double lj1 = s.log_joint_oracle();
      s.params().kappa2 = k2;
      const double lj2 = s.log_joint_oracle();
      check(lj1 - lj2, ig(k1) - ig(k2));
    }
    {  // one random velocity coordinate
      const int seg = pair % s.n_segments();
      const long i =
          static_cast<long>(rng.uniform(0.0, 1.0) * s.segment_length(seg));
      const int dim = pair % 2;
      const auto c = s.velocity_conditional(seg, i, dim);
      const double v1 = rng.gaussian(), v2 = rng.gaussian();
      s.velocities()[seg](i, dim) = v1;
      const double lj1 = s.log_joint_oracle();
      s.velocities()[seg](i, dim) = v2;
      const double lj2 = s.log_joint_oracle();
      check(lj1 - lj2, normal_lp(v1, c.mean, c.var) - normal_lp(v2, c.mean, c.var));
    }
    {  // gamma block
      const auto c = s.gamma_conditional();
      const Vector mean = c.precision.ldlt().solve(c.lin);
      const int n = s.n_coef();
      Vector g1(n), g2(n);
      for (int i = 0; i < n; ++i) {
        g1[i] = 0.3 * rng.gaussian();
        g2[i] = 0.3 * rng.gaussian();
      }
      s.gamma() = g1;
      s.refresh_caches();
      const double lj1 = s.log_joint_oracle();
      s.gamma() = g2;
      s.refresh_caches();
      const double lj2 = s.log_joint_oracle();
      check(lj1 - lj2, -0.5 * (g1 - mean).dot(c.precision * (g1 - mean)) +
                           0.5 * (g2 - mean).dot(c.precision * (g2 - mean)));
    }
    {  // alpha block
      const auto c = s.alpha_conditional();
      const Vector mean = c.precision.ldlt().solve(c.lin);
      const int n = s.n_coef();
      Vector a1(n), a2(n);
      for (int i = 0; i < n; ++i) {
        a1[i] = 1.0 + 0.2 * rng.gaussian();
        a2[i] = 1.0 + 0.2 * rng.gaussian();
      }
      s.alpha() = a1;
      s.refresh_caches();
      const double lj1 = s.log_joint_oracle();
      s.alpha() = a2;
      s.refresh_caches();
      const double lj2 = s.log_joint_oracle();
      check(lj1 - lj2, -0.5 * (a1 - mean).dot(c.precision * (a1 - mean)) +
                           0.5 * (a2 - mean).dot(c.precision * (a2 - mean)));
    }
    {  // tau_gamma
      const auto c = s.tau_gamma_conditional();
      const double t1 = rng.uniform(0.1, 10.0), t2 = rng.uniform(0.1, 10.0);
      const auto ga = [&](double x) {
        return (c.shape - 1) * std::log(x) - c.rate * x;
      };
      s.params().tau_gamma = t1;
      const double lj1 = s.log_joint_oracle();
      s.params().tau_gamma = t2;
      const double lj2 = s.log_joint_oracle();
      check(lj1 - lj2, ga(t1) - ga(t2));
    }
    s.sweep(rng);  // fresh state for the next pair
  }
  const double secs = elapsed_s(t0);
  const bool pass = worst < 1e-8 && secs < 60.0;
  report(5, pass,
         fmt("ratio oracles: worst relative error %.2e < 1e-8 over 100 pairs "
             "x 6 conditionals, %.1f s < 60 s",
             worst, secs));
}

// --- criterion 6: numerical core ---
void criterion_6() {
  Rng rng(6);
  double pu_err = 0;
  for (int count : {4, 6, 10, 16}) {
    const SplineBasis b(4, count, -2.0, 3.0);
    for (int t = 0; t < 250; ++t) {
      const double u = rng.uniform(-2.0, 3.0);
      const auto [val, der] = b.eval_with_deriv(u);
      pu_err = std::max(pu_err, std::abs(val.sum() - 1.0));
    }
  }

  const SplineBasis bx(4, 7, -2.0, 2.0), by(4, 9, -1.0, 3.0);
  Matrix coef(7, 9);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 9; ++j) coef(i, j) = rng.gaussian();
  const TensorSurface surf(bx, by, coef);
  double fd_err = 0;
  const double h = 1e-6;
  for (int t = 0; t < 300; ++t) {
    const double x = rng.uniform(-1.9, 1.9), y = rng.uniform(-0.9, 2.9);
    const Vec2 g = surf.grad(x, y);
    const double gx = (surf.eval(x + h, y) - surf.eval(x - h, y)) / (2 * h);
    const double gy = (surf.eval(x, y + h) - surf.eval(x, y - h)) / (2 * h);
    const double scale = std::max(1.0, std::hypot(g[0], g[1]));
    fd_err = std::max(fd_err, std::hypot(g[0] - gx, g[1] - gy) / scale);
  }

  ModelParams truth;
  truth.beta = 1.5;
  truth.kappa2 = 0.01;
  SimConfig base;
  base.delta = 0.1;
  base.n_steps = 49;
  base.fields = quadrant_fields();
  const TrajectorySet data = simulate_set(base, truth, 2, 600);
  FitConfig cfg;
  cfg.basis_k = 4;
  cfg.basis_l = 4;
  cfg.x_lo = cfg.y_lo = -3;
  cfg.x_hi = cfg.y_hi = 3;
  GibbsSampler s(data, cfg);
  double sum_err = 0;
  for (int it = 0; it < 1000; ++it) {
    s.sweep(rng);
    sum_err = std::max(sum_err, std::abs(s.gamma().sum()));
  }

  double min_eig = 1e300;
  for (auto [K, L] : std::vector<std::pair<int, int>>{{4, 4}, {8, 12}, {16, 35}})
    for (double rho : {0.01, 0.5, 0.99}) {
      const Matrix prec = car_precision(build_car(K, L), 1.0, rho);
      Eigen::SelfAdjointEigenSolver<Matrix> eig(prec, Eigen::EigenvaluesOnly);
      min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
    }

  const bool pass =
      pu_err < 1e-12 && fd_err < 1e-6 && sum_err < 1e-10 && min_eig > 0;
  report(6, pass,
         fmt("numerical core: partition-of-unity %.1e < 1e-12, FD gradient "
             "%.1e < 1e-6, sum(gamma) %.1e < 1e-10 over 1000 sweeps, CAR min "
             "eigenvalue %.2e > 0 up to 16x35",
             pu_err, fd_err, sum_err, min_eig));
}

// --- criterion 7: OU stationary velocity variance ---
void criterion_7() {
  ModelParams p;
  p.beta = 1.5;
  p.sigma2 = 1.0;
  p.kappa2 = 0.01;
  SimConfig cfg;
  cfg.delta = 0.01;
  cfg.n_steps = 1000000;
  cfg.seed = 70;
  cfg.fields = fields_analytic([](double, double) { return Vec2(0, 0); },
                               [](double, double) { return 1.0; }, std::nullopt);
  const SimPath path = simulate(cfg, p);
  double s1 = 0, s2 = 0;
  long n = 0;
  for (std::size_t i = 10000; i < path.states.size(); ++i) {
    for (double v : {path.states[i].vx, path.states[i].vy}) {
      s1 += v;
      s2 += v * v;
      ++n;
    }
  }
  const double var = s2 / n - (s1 / n) * (s1 / n);
  const double target = p.sigma2 / (2.0 * p.beta);
  const bool pass = std::abs(var - target) / target < 0.10;
  report(7, pass,
         fmt("OU check: stationary velocity variance %.4f within 10%% of %.4f",
             var, target));
}

// --- criterion 8: first-passage monotonicity in the four-chamber nest ---
void criterion_8() {
  const NestGeometry nest = four_chamber_nest();
  ModelParams p;
  p.beta = 0.5;
  p.sigma2 = 25.0;
  p.kappa2 = 0.25;
  p.r1 = 0.2;
  p.tau_v1 = 25.0;
  SimConfig cfg;
  cfg.delta = 0.1;
  cfg.n_steps = 30000;
  cfg.seed = 80;
  cfg.truncate_walls = true;
  cfg.geometry = nest;
  cfg.fields = fields_analytic(
      [](double, double) { return Vec2(0, 0); },
      [](double, double) { return 1.0; },
      WallField(nest.x_lo, nest.x_hi, nest.y_lo, nest.y_hi, p.r1));
  const Vec2 start(10.0, 10.0);  // inside the bottom section IVb

  const Matrix entry = first_passage(nest, cfg, p, 100, start);
  bool start_zero = true;
  for (int a = 0; a < entry.rows(); ++a)
    start_zero = start_zero && entry(a, 0) == 0.0;
  std::vector<double> medians;
  bool monotone = true;
  for (Eigen::Index sec = 0; sec < entry.cols(); ++sec) {
    std::vector<double> col(entry.rows());
    for (int a = 0; a < entry.rows(); ++a) col[a] = entry(a, sec);
    std::sort(col.begin(), col.end());
    const double med = 0.5 * (col[49] + col[50]);
    if (!medians.empty() && med < medians.back()) monotone = false;
    medians.push_back(med);
  }

  // Wall integrity: a truncated path from the same dynamics never leaves
  // the nest polygon.
  SimConfig walk = cfg;
  walk.n_steps = 5000;
  walk.seed = 81;
  walk.initial = {start[0], start[1], 0.0, 0.0};
  const SimPath path = simulate(walk, p);
  bool inside = true;
  for (const auto& s : path.states)
    inside = inside && nest.contains(s.x, s.y);

  std::string meds;
  for (double m : medians)
    meds += (meds.empty() ? "" : ", ") + fmt("%.0f", m);
  const bool pass = start_zero && monotone && inside;
  report(8, pass,
         fmt("first passage: start-section entries all 0 (%s), medians "
             "nondecreasing [%s], all positions inside walls (%s)",
             start_zero ? "yes" : "no", meds.c_str(), inside ? "yes" : "no"));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_2();
  criteria_1_3_4();
  std::printf("acceptance: %d of 8 criteria passed in %.0f s\n", 8 - failures,
              elapsed_s(t0));
  return failures;
}
