#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "svsde/geometry.hpp"
#include "svsde/spline.hpp"
#include "svsde/types.hpp"

namespace svsde {

/// Scalar model parameters plus prior hyperparameters. All values carry the
/// defaults used throughout; variance/scale parameters must stay positive.
struct ModelParams {
  double beta = 1.0;      // velocity autocorrelation
  double sigma2 = 1.0;    // velocity noise variance (fixed at 1 for inference)
  double kappa2 = 0.01;   // location noise variance
  double r1 = 0.1;        // wall repulsion decay
  double mu_alpha = 1.0;  // motility scale
  double tau_gamma = 1.0;
  double tau_alpha = 9.0;  // fixed
  double rho_gamma = 0.5;
  double rho_alpha = 0.5;

  // Prior hyperparameters.
  double mu_beta = 1.0;
  double tau_beta = 10000.0;   // variance of the truncated-normal beta prior
  double alpha_kappa = 0.001;  // inverse-gamma shape
  double beta_kappa = 0.001;   // inverse-gamma rate
  double tau_v1 = 1000.0;      // initial-velocity prior variance
};

struct SimState {
  double x = 0, y = 0;
  double vx = 0, vy = 0;
};

/// Drift fields the solver steps against: gradient of the combined potential
/// and the motility value. Spline-backed and analytic surfaces both fit.
struct DriftFields {
  std::function<Vec2(double, double)> potential_grad;
  std::function<double(double, double)> motility;
};

/// Fields from tensor surfaces + optional wall repulsion. Spline evaluation
/// clamps (x, y) to the basis domain; the wall term uses the true point.
DriftFields fields_from_surfaces(const TensorSurface& h, const TensorSurface& m,
                                 const std::optional<WallField>& wall);
DriftFields fields_analytic(std::function<Vec2(double, double)> spline_grad,
                            std::function<double(double, double)> motility,
                            const std::optional<WallField>& wall);

struct SimConfig {
  double delta = 0.1;
  long n_steps = 0;
  SimState initial;
  std::uint64_t seed = 0;
  bool truncate_walls = false;
  DriftFields fields;
  std::optional<NestGeometry> geometry;  // required if truncate_walls
};

struct SimPath {
  double delta = 0.1;
  std::vector<SimState> states;  // n_steps + 1 entries
};

/// One Euler-Maruyama step of the four-equation discretized system. The
/// location update uses the pre-update velocity.
SimState em_step(const SimState& s, const ModelParams& p, const DriftFields& f,
                 double delta, Rng& rng);

SimPath simulate(const SimConfig& config, const ModelParams& params);

/// If the move from `from` to `proposed` crosses a solid wall, pull back to
/// just before the first crossing; otherwise return `proposed` unchanged.
/// Velocity is carried over from `proposed`.
SimState truncate_to_walls(const SimState& from, const SimState& proposed,
                           const NestGeometry& geometry);

/// Wall-truncated forward simulation of independent agents from a common
/// start; first entry time into each named section, infinity if never
/// entered. Initial velocities are drawn from N(0, tau_v1) per agent.
Matrix first_passage(const NestGeometry& geometry, const SimConfig& config,
                     const ModelParams& params, int n_agents, const Vec2& start);

}  // namespace svsde
