#pragma once

#include <vector>

#include "svsde/data.hpp"
#include "svsde/inference.hpp"
#include "svsde/sde.hpp"
#include "svsde/types.hpp"

namespace svsde {

/// Empirical quantile (linear interpolation between order statistics).
double quantile(std::vector<double> values, double p);

struct ChainSummary {
  double mean = 0;
  double lower = 0;  // 2.5% quantile
  double upper = 0;  // 97.5% quantile
  double mcse = 0;
};

ChainSummary summarize(const std::vector<double>& draws);

/// Pointwise posterior mean and 95% band on an evaluation grid.
struct SurfaceSummary {
  Matrix mean, lower, upper;  // nx x ny
};

struct PosteriorSurfaces {
  Vector grid_x, grid_y;
  SurfaceSummary potential;
  SurfaceSummary motility;
  /// Posterior-mean drift direction: -grad H(mean) scaled by mean motility.
  Matrix drift_x, drift_y;
};

PosteriorSurfaces posterior_surfaces(const PosteriorChain& chain, int nx, int ny);
/// Same on an explicit grid rectangle; bounds must lie inside the spline domain.
PosteriorSurfaces posterior_surfaces(const PosteriorChain& chain, int nx, int ny,
                                     double x_lo, double x_hi, double y_lo,
                                     double y_hi);

/// Pointwise posterior summary of the motility surface at one location.
ChainSummary motility_at(const PosteriorChain& chain, double x, double y);

/// Mean one-step prediction error (Euclidean distance per transition),
/// averaged over the stored velocity snapshots. Each transition is forecast
/// by stepping the previous velocity draw through the fitted drift with a
/// sigma innovation, then the location update with kappa noise; the internal
/// noise stream is seeded deterministically from the fit seed. `variant`
/// must match the chain's fit variant.
double one_step_error(const PosteriorChain& chain, const TrajectorySet& data,
                      FitVariant variant);

struct ThinRow {
  int factor = 1;
  double delta = 0;           // factor * base delta
  ChainSummary beta_delta;    // posterior of beta * delta
  ChainSummary kappa2;        // raw
  ChainSummary kappa2_delta;  // kappa^2 * delta
};

/// Discretization-error study: simulate `n_individuals` paths per factor
/// (extending the horizon so retained counts match), keep every k-th
/// observation, fit, and report the scaled estimates.
std::vector<ThinRow> thinning_study(const SimConfig& base, const ModelParams& params,
                                    const FitConfig& fit,
                                    const std::vector<int>& factors,
                                    int n_individuals);

/// Keep every k-th state of a simulated path as one observed individual;
/// the effective time step becomes factor * path.delta.
TrajectorySet thin_path(const SimPath& path, int factor, const std::string& id = "sim");

/// Merge several thinned paths into one trajectory set (equal deltas required).
TrajectorySet merge_trajectories(const std::vector<TrajectorySet>& sets);

}  // namespace svsde
