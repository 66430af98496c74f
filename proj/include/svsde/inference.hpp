#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svsde/car.hpp"
#include "svsde/data.hpp"
#include "svsde/sde.hpp"
#include "svsde/spline.hpp"
#include "svsde/types.hpp"

namespace svsde {

enum class FitVariant { full, no_potential, no_motility };

/// Random-walk Metropolis on one unconstrained coordinate with Robbins-Monro
/// step adaptation toward ~30% acceptance; freeze with set_adapting(false).
class AdaptiveRwMh {
 public:
  explicit AdaptiveRwMh(double init_step = 0.1) : log_step_(std::log(init_step)) {}

  /// One proposal against `logtarget` (density on the unconstrained scale,
  /// Jacobian included by the caller). Returns true on acceptance.
  template <typename F>
  bool step(double& z, F&& logtarget, Rng& rng) {
    const double cur = logtarget(z);
    const double prop = z + std::exp(log_step_) * rng.gaussian();
    const double cand = logtarget(prop);
    const double u = rng.uniform();
    const bool accept = std::isfinite(cand) && std::log(u) < cand - cur;
    if (accept) z = prop;
    ++proposed_;
    if (accept) ++accepted_;
    if (adapting_) {
      const double gain = std::min(0.1, 5.0 / (10.0 + proposed_));
      log_step_ += gain * ((accept ? 1.0 : 0.0) - 0.3);
    }
    return accept;
  }

  void set_adapting(bool on) { adapting_ = on; }
  double step_size() const { return std::exp(log_step_); }
  void set_step_size(double s) { log_step_ = std::log(s); }
  long accepted() const { return accepted_; }
  long proposed() const { return proposed_; }
  double acceptance_rate() const {
    return proposed_ ? static_cast<double>(accepted_) / proposed_ : 0.0;
  }
  void reset_counts() { accepted_ = proposed_ = 0; }

 private:
  double log_step_;
  bool adapting_ = true;
  long accepted_ = 0;
  long proposed_ = 0;
};

struct FitConfig {
  long iterations = 10000;
  long burn_in = 2000;
  long thin = 1;
  /// Keep latent-velocity snapshots for every k-th retained draw (0 = none);
  /// one-step prediction error needs them.
  long velocity_draw_stride = 0;
  std::uint64_t seed = 0;

  int basis_k = 8;
  int basis_l = 8;
  double x_lo = -3, x_hi = 3, y_lo = -3, y_hi = 3;  // shared spline domain

  FitVariant variant = FitVariant::full;
  bool wall_enabled = false;
  bool sample_r1 = true;
  double wall_x_lo = 0, wall_x_hi = 1, wall_y_lo = 0, wall_y_hi = 1;

  ModelParams init;  // starting values + prior hyperparameters
};

struct PosteriorChain {
  FitConfig config;
  double delta = 1.0;

  std::vector<double> beta, kappa2, tau_gamma, rho_gamma, rho_alpha, mu_alpha,
      r1, log_joint;
  Matrix gamma_draws;  // retained x (K*L)
  Matrix alpha_draws;
  /// Velocity snapshots: (retained-draw index, per-segment n x 2 matrices),
  /// segments flattened in data order.
  std::vector<std::pair<long, std::vector<Matrix>>> velocity_draws;
  std::map<std::string, double> acceptance;

  long retained() const { return static_cast<long>(beta.size()); }
  SplineBasis make_basis_x() const {
    return SplineBasis(4, config.basis_k, config.x_lo, config.x_hi);
  }
  SplineBasis make_basis_y() const {
    return SplineBasis(4, config.basis_l, config.y_lo, config.y_hi);
  }
};

/// Block Gibbs/Metropolis sampler over the discretized model. Exposes the
/// individual conditionals so tests can check each against log_joint.
class GibbsSampler {
 public:
  GibbsSampler(const TrajectorySet& data, const FitConfig& config);

  // --- mutable state ---
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  Vector& gamma() { return gamma_; }
  Vector& alpha() { return alpha_; }
  /// Per segment (flattened over individuals), n x 2 with columns (vx, vy).
  std::vector<Matrix>& velocities() { return vel_; }
  int n_coef() const { return car_.size(); }
  int n_segments() const { return static_cast<int>(segments_.size()); }
  long segment_length(int s) const { return segments_[s].n; }
  const CarStructure& car() const { return car_; }

  /// Must be called after mutating gamma, alpha, r1, or state directly
  /// (the samplers keep the caches current themselves).
  void refresh_caches();

  /// Full log joint density of data, latents, and priors, evaluated from
  /// scratch through the surface types (not the sampler caches).
  double log_joint_oracle() const;
  /// Same quantity from the incremental caches (used for chain records).
  double log_joint_cached() const;

  // --- full conditionals, exposed for the ratio oracle ---
  struct NormalCond { double mean; double var; };
  struct IgCond { double shape; double rate; };
  struct GammaCond { double shape; double rate; };
  struct MvnCond { Vector lin; Matrix precision; };  // mean = P^{-1} lin

  NormalCond beta_conditional() const;       // truncated to (0, inf)
  IgCond kappa2_conditional() const;
  NormalCond velocity_conditional(int seg, long i, int dim) const;
  MvnCond gamma_conditional() const;         // pre-constraint
  MvnCond alpha_conditional() const;
  GammaCond tau_gamma_conditional() const;

  // --- Gibbs draws ---
  void sample_velocities(Rng& rng);
  void sample_beta(Rng& rng);
  void sample_kappa2(Rng& rng);
  void sample_gamma(Rng& rng);  // draws unconstrained, then sum-to-zero
  void sample_alpha(Rng& rng);
  void sample_tau_gamma(Rng& rng);

  // --- random-walk Metropolis blocks (logit / log / identity transforms) ---
  bool mh_rho_gamma(Rng& rng);
  bool mh_rho_alpha(Rng& rng);
  bool mh_mu_alpha(Rng& rng);
  bool mh_r1(Rng& rng);
  void set_adapting(bool on) {
    for (auto& [name, block] : mh_) block.set_adapting(on);
  }

  /// One full sweep in the fixed order: velocities, beta, kappa2, gamma,
  /// alpha, tau_gamma, MH blocks.
  void sweep(Rng& rng);
  const std::map<std::string, AdaptiveRwMh>& mh_blocks() const { return mh_; }

  TensorSurface potential_surface() const;
  TensorSurface motility_surface() const;
  std::optional<WallField> wall() const;

 private:
  struct SegmentCache {
    long n = 0;
    Vector x, y;           // observed coordinates
    Vector dx, dy;         // one-step displacements (n-1)
    Eigen::VectorXi span_x, span_y;
    Matrix bx, by, dbx, dby;  // n x order local basis values / derivatives
    Vector motility;          // M(x_i, y_i)
    Vector grad_x, grad_y;    // spline part of dH/dx, dH/dy
    Vector wall_x, wall_y;    // wall part of the gradient
  };

  void refresh_motility(SegmentCache& sc) const;
  void refresh_potential(SegmentCache& sc) const;
  void refresh_wall(SegmentCache& sc, double r1) const;
  double velocity_loglik_for_r1(double r1) const;
  bool mh_generic(const std::string& name, double& value,
                  double (GibbsSampler::*logtarget)(double) const,
                  double lo, double hi, int transform, Rng& rng);
  double logtarget_rho_gamma(double rho) const;
  double logtarget_rho_alpha(double rho) const;
  double logtarget_mu_alpha(double mu) const;
  double logtarget_r1(double r1) const;

  FitConfig config_;
  double delta_;
  SplineBasis basis_x_, basis_y_;
  CarStructure car_;
  Vector car_eigs_;
  Matrix gamma_gram_;  // sum over transitions of Bx Bx' + By By'

  std::vector<SegmentCache> segments_;
  std::vector<Matrix> vel_;
  ModelParams params_;
  Vector gamma_, alpha_;

  std::map<std::string, AdaptiveRwMh> mh_;
};

PosteriorChain run_chain(const TrajectorySet& data, const FitConfig& config);

/// Batch-means Monte Carlo standard error with batch count floor(sqrt(n)).
double batch_means_mcse(const std::vector<double>& samples);

/// Chain CSV + manifest export; load_chain round-trips the result.
void save_chain(const PosteriorChain& chain, const std::string& out_dir);
PosteriorChain load_chain(const std::string& dir);

}  // namespace svsde
