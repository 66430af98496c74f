#include "svsde/inference.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace svsde {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

double gauss_logpdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

}  // namespace

GibbsSampler::GibbsSampler(const TrajectorySet& data, const FitConfig& config)
    : config_(config),
      delta_(data.delta),
      basis_x_(4, config.basis_k, config.x_lo, config.x_hi),
      basis_y_(4, config.basis_l, config.y_lo, config.y_hi),
      car_(build_car(config.basis_k, config.basis_l)),
      params_(config.init) {
  car_eigs_ = car_scaled_eigenvalues(car_);
  const int order = basis_x_.order();
  const int n = car_.size();
  const int L = config_.basis_l;

  // Per-observation basis caches; coordinates are clamped to the spline
  // domain (wall repulsion owns the exterior).
  double disp_var_acc = 0.0;
  long disp_count = 0;
  for (const auto& ind : data.individuals) {
    for (const auto& seg : ind.segments) {
      if (seg.size() < 3)
        throw std::invalid_argument("GibbsSampler: segment shorter than 3");
      SegmentCache sc;
      sc.n = static_cast<long>(seg.size());
      sc.x.resize(sc.n);
      sc.y.resize(sc.n);
      sc.span_x.resize(sc.n);
      sc.span_y.resize(sc.n);
      sc.bx.resize(sc.n, order);
      sc.by.resize(sc.n, order);
      sc.dbx.resize(sc.n, order);
      sc.dby.resize(sc.n, order);
      for (long i = 0; i < sc.n; ++i) {
        sc.x[i] = seg[i].x;
        sc.y[i] = seg[i].y;
        const auto lx =
            basis_x_.eval_local(std::clamp(seg[i].x, basis_x_.lo(), basis_x_.hi()));
        const auto ly =
            basis_y_.eval_local(std::clamp(seg[i].y, basis_y_.lo(), basis_y_.hi()));
        sc.span_x[i] = lx.first;
        sc.span_y[i] = ly.first;
        for (int a = 0; a < order; ++a) {
          sc.bx(i, a) = lx.value[a];
          sc.dbx(i, a) = lx.deriv[a];
          sc.by(i, a) = ly.value[a];
          sc.dby(i, a) = ly.deriv[a];
        }
      }
      sc.dx = sc.x.tail(sc.n - 1) - sc.x.head(sc.n - 1);
      sc.dy = sc.y.tail(sc.n - 1) - sc.y.head(sc.n - 1);
      disp_var_acc += sc.dx.squaredNorm() + sc.dy.squaredNorm();
      disp_count += 2 * (sc.n - 1);
      sc.motility.setOnes(sc.n);
      sc.grad_x.setZero(sc.n);
      sc.grad_y.setZero(sc.n);
      sc.wall_x.setZero(sc.n);
      sc.wall_y.setZero(sc.n);
      segments_.push_back(std::move(sc));

      // Warm start: velocities from empirical finite differences.
      Matrix v(segments_.back().n, 2);
      const auto& s = segments_.back();
      for (long i = 0; i + 1 < s.n; ++i) {
        v(i, 0) = s.dx[i] / delta_;
        v(i, 1) = s.dy[i] / delta_;
      }
      v.row(s.n - 1) = v.row(s.n - 2);
      vel_.push_back(std::move(v));
    }
  }
  if (segments_.empty())
    throw std::invalid_argument("GibbsSampler: no usable segments");

  if (disp_count > 0) {
    // Start by attributing all displacement variance to location noise; a
    // small initial kappa^2 pins the velocities to the finite differences
    // and the chain can take hundreds of sweeps to escape.
    const double disp_var = disp_var_acc / disp_count;
    params_.kappa2 = std::max(1e-12, disp_var / data.delta);
  }
  params_.beta = 1.0;
  if (config_.variant == FitVariant::no_motility) params_.mu_alpha = 1.0;

  gamma_ = Vector::Zero(n);
  alpha_ = Vector::Ones(n);  // partition of unity: M = 1

  // Gram matrix of the potential-gradient design; fixed because the
  // observed locations never change.
  gamma_gram_ = Matrix::Zero(n, n);
  Vector rowx(n), rowy(n);
  for (const auto& sc : segments_) {
    for (long i = 0; i + 1 < sc.n; ++i) {
      for (int a = 0; a < order; ++a)
        for (int b = 0; b < order; ++b) {
          const int idx = (sc.span_x[i] + a) * L + (sc.span_y[i] + b);
          const double vx = sc.dbx(i, a) * sc.by(i, b);
          const double vy = sc.bx(i, a) * sc.dby(i, b);
          rowx[idx] = vx;
          rowy[idx] = vy;
        }
      for (int a = 0; a < order; ++a)
        for (int b = 0; b < order; ++b) {
          const int ia = (sc.span_x[i] + a) * L + (sc.span_y[i] + b);
          for (int c = 0; c < order; ++c)
            for (int d = 0; d < order; ++d) {
              const int ib = (sc.span_x[i] + c) * L + (sc.span_y[i] + d);
              gamma_gram_(ia, ib) += rowx[ia] * rowx[ib] + rowy[ia] * rowy[ib];
            }
        }
    }
  }

  mh_.emplace("rho_gamma", AdaptiveRwMh(0.5));
  mh_.emplace("rho_alpha", AdaptiveRwMh(0.5));
  mh_.emplace("mu_alpha", AdaptiveRwMh(0.1));
  mh_.emplace("r1", AdaptiveRwMh(0.3));

  refresh_caches();
}

void GibbsSampler::refresh_motility(SegmentCache& sc) const {
  const int order = basis_x_.order();
  const int L = config_.basis_l;
  for (long i = 0; i < sc.n; ++i) {
    double m = 0.0;
    for (int a = 0; a < order; ++a) {
      const int base = (sc.span_x[i] + a) * L + sc.span_y[i];
      double acc = 0.0;
      for (int b = 0; b < order; ++b) acc += alpha_[base + b] * sc.by(i, b);
      m += sc.bx(i, a) * acc;
    }
    sc.motility[i] = m;
  }
}

void GibbsSampler::refresh_potential(SegmentCache& sc) const {
  const int order = basis_x_.order();
  const int L = config_.basis_l;
  for (long i = 0; i < sc.n; ++i) {
    double gx = 0.0, gy = 0.0;
    for (int a = 0; a < order; ++a) {
      const int base = (sc.span_x[i] + a) * L + sc.span_y[i];
      double accv = 0.0, accd = 0.0;
      for (int b = 0; b < order; ++b) {
        accv += gamma_[base + b] * sc.by(i, b);
        accd += gamma_[base + b] * sc.dby(i, b);
      }
      gx += sc.dbx(i, a) * accv;
      gy += sc.bx(i, a) * accd;
    }
    sc.grad_x[i] = gx;
    sc.grad_y[i] = gy;
  }
}

void GibbsSampler::refresh_wall(SegmentCache& sc, double r1) const {
  if (!config_.wall_enabled) {
    sc.wall_x.setZero();
    sc.wall_y.setZero();
    return;
  }
  const WallField w(config_.wall_x_lo, config_.wall_x_hi, config_.wall_y_lo,
                    config_.wall_y_hi, r1);
  for (long i = 0; i < sc.n; ++i) {
    const auto g = w.eval_grad(sc.x[i], sc.y[i]);
    sc.wall_x[i] = g.gx;
    sc.wall_y[i] = g.gy;
  }
}

void GibbsSampler::refresh_caches() {
  for (auto& sc : segments_) {
    refresh_motility(sc);
    refresh_potential(sc);
    refresh_wall(sc, params_.r1);
  }
}

TensorSurface GibbsSampler::potential_surface() const {
  Matrix c(config_.basis_k, config_.basis_l);
  for (int k = 0; k < config_.basis_k; ++k)
    for (int l = 0; l < config_.basis_l; ++l) c(k, l) = gamma_[k * config_.basis_l + l];
  return TensorSurface(basis_x_, basis_y_, std::move(c));
}

TensorSurface GibbsSampler::motility_surface() const {
  Matrix c(config_.basis_k, config_.basis_l);
  for (int k = 0; k < config_.basis_k; ++k)
    for (int l = 0; l < config_.basis_l; ++l) c(k, l) = alpha_[k * config_.basis_l + l];
  return TensorSurface(basis_x_, basis_y_, std::move(c));
}

std::optional<WallField> GibbsSampler::wall() const {
  if (!config_.wall_enabled) return std::nullopt;
  return WallField(config_.wall_x_lo, config_.wall_x_hi, config_.wall_y_lo,
                   config_.wall_y_hi, params_.r1);
}

double GibbsSampler::log_joint_oracle() const {
  const auto& p = params_;
  if (!(p.beta > 0.0) || !(p.kappa2 > 0.0) || !(p.tau_gamma > 0.0)) return kNegInf;
  if (config_.wall_enabled && !(p.r1 > 0.0)) return kNegInf;
  if (!(p.rho_gamma > 0.01 && p.rho_gamma < 0.99)) return kNegInf;
  if (!(p.rho_alpha > 0.01 && p.rho_alpha < 0.99)) return kNegInf;

  const TensorSurface h = potential_surface();
  const TensorSurface m = motility_surface();
  const auto w = wall();

  double lj = 0.0;
  const double var_v = p.sigma2 * delta_;
  const double var_l = p.kappa2 * delta_;
  for (int s = 0; s < n_segments(); ++s) {
    const auto& sc = segments_[s];
    const Matrix& v = vel_[s];
    lj += gauss_logpdf(v(0, 0), 0.0, p.tau_v1);
    lj += gauss_logpdf(v(0, 1), 0.0, p.tau_v1);
    for (long i = 0; i + 1 < sc.n; ++i) {
      const double cx = std::clamp(sc.x[i], basis_x_.lo(), basis_x_.hi());
      const double cy = std::clamp(sc.y[i], basis_y_.lo(), basis_y_.hi());
      Vec2 g = h.grad(cx, cy);
      if (w) {
        const auto wg = w->eval_grad(sc.x[i], sc.y[i]);
        g[0] += wg.gx;
        g[1] += wg.gy;
      }
      const double mval = m.eval(cx, cy);
      lj += gauss_logpdf(v(i + 1, 0),
                         v(i, 0) + p.beta * (-g[0] - v(i, 0)) * delta_, var_v);
      lj += gauss_logpdf(v(i + 1, 1),
                         v(i, 1) + p.beta * (-g[1] - v(i, 1)) * delta_, var_v);
      lj += gauss_logpdf(sc.x[i + 1], sc.x[i] + mval * v(i, 0) * delta_, var_l);
      lj += gauss_logpdf(sc.y[i + 1], sc.y[i] + mval * v(i, 1) * delta_, var_l);
    }
  }

  // Parameter priors.
  const int n = n_coef();
  lj += -0.5 * (p.beta - p.mu_beta) * (p.beta - p.mu_beta) / p.tau_beta;
  lj += -(p.alpha_kappa + 1.0) * std::log(p.kappa2) - p.beta_kappa / p.kappa2;
  if (config_.variant != FitVariant::no_potential) {
    const double ld = car_logdet(car_, car_eigs_, p.rho_gamma);
    Matrix prec = car_precision(car_, p.tau_gamma, p.rho_gamma);
    lj += 0.5 * (n * std::log(p.tau_gamma) + ld) -
          0.5 * gamma_.dot(prec * gamma_) - 0.5 * n * kLog2Pi;
    lj += std::log(p.mu_alpha * p.mu_alpha) - p.mu_alpha * p.mu_alpha * p.tau_gamma;
  }
  if (config_.variant != FitVariant::no_motility) {
    const double ld = car_logdet(car_, car_eigs_, p.rho_alpha);
    const double tau = p.tau_alpha / (p.mu_alpha * p.mu_alpha);
    Matrix prec = car_precision(car_, tau, p.rho_alpha);
    const Vector e = alpha_ - Vector::Constant(n, p.mu_alpha);
    lj += 0.5 * (n * std::log(tau) + ld) - 0.5 * e.dot(prec * e) -
          0.5 * n * kLog2Pi;
    lj += -0.5 * (p.mu_alpha - 1.0) * (p.mu_alpha - 1.0);
  }
  if (config_.wall_enabled) {
    const double l = std::log(p.r1);
    lj += -l - 0.5 * (l - 10.0) * (l - 10.0);
  }
  return lj;
}

double GibbsSampler::log_joint_cached() const {
  const auto& p = params_;
  double lj = 0.0;
  const double var_v = p.sigma2 * delta_;
  const double var_l = p.kappa2 * delta_;
  const double c = 1.0 - p.beta * delta_;
  long n_v = 0, n_l = 0;
  double ss_v = 0.0, ss_l = 0.0;
  for (int s = 0; s < n_segments(); ++s) {
    const auto& sc = segments_[s];
    const Matrix& v = vel_[s];
    lj += gauss_logpdf(v(0, 0), 0.0, p.tau_v1) + gauss_logpdf(v(0, 1), 0.0, p.tau_v1);
    for (long i = 0; i + 1 < sc.n; ++i) {
      const double hx = sc.grad_x[i] + sc.wall_x[i];
      const double hy = sc.grad_y[i] + sc.wall_y[i];
      double r = v(i + 1, 0) - c * v(i, 0) + p.beta * delta_ * hx;
      ss_v += r * r;
      r = v(i + 1, 1) - c * v(i, 1) + p.beta * delta_ * hy;
      ss_v += r * r;
      r = sc.dx[i] - sc.motility[i] * v(i, 0) * delta_;
      ss_l += r * r;
      r = sc.dy[i] - sc.motility[i] * v(i, 1) * delta_;
      ss_l += r * r;
      n_v += 2;
      n_l += 2;
    }
  }
  lj += -0.5 * n_v * (kLog2Pi + std::log(var_v)) - 0.5 * ss_v / var_v;
  lj += -0.5 * n_l * (kLog2Pi + std::log(var_l)) - 0.5 * ss_l / var_l;

  const int n = n_coef();
  lj += -0.5 * (p.beta - p.mu_beta) * (p.beta - p.mu_beta) / p.tau_beta;
  lj += -(p.alpha_kappa + 1.0) * std::log(p.kappa2) - p.beta_kappa / p.kappa2;
  if (config_.variant != FitVariant::no_potential) {
    const double ld = car_logdet(car_, car_eigs_, p.rho_gamma);
    const double q = p.tau_gamma * (gamma_.dot(car_.degrees.asDiagonal() * gamma_) -
                                    p.rho_gamma * gamma_.dot(car_.adjacency * gamma_));
    lj += 0.5 * (n * std::log(p.tau_gamma) + ld) - 0.5 * q - 0.5 * n * kLog2Pi;
    lj += std::log(p.mu_alpha * p.mu_alpha) - p.mu_alpha * p.mu_alpha * p.tau_gamma;
  }
  if (config_.variant != FitVariant::no_motility) {
    const double ld = car_logdet(car_, car_eigs_, p.rho_alpha);
    const double tau = p.tau_alpha / (p.mu_alpha * p.mu_alpha);
    const Vector e = alpha_ - Vector::Constant(n, p.mu_alpha);
    const double q = tau * (e.dot(car_.degrees.asDiagonal() * e) -
                            p.rho_alpha * e.dot(car_.adjacency * e));
    lj += 0.5 * (n * std::log(tau) + ld) - 0.5 * q - 0.5 * n * kLog2Pi;
    lj += -0.5 * (p.mu_alpha - 1.0) * (p.mu_alpha - 1.0);
  }
  if (config_.wall_enabled) {
    const double l = std::log(p.r1);
    lj += -l - 0.5 * (l - 10.0) * (l - 10.0);
  }
  return lj;
}

GibbsSampler::NormalCond GibbsSampler::beta_conditional() const {
  const auto& p = params_;
  double prec = 1.0 / p.tau_beta;
  double lin = p.mu_beta / p.tau_beta;
  for (int s = 0; s < n_segments(); ++s) {
    const auto& sc = segments_[s];
    const Matrix& v = vel_[s];
    for (long i = 0; i + 1 < sc.n; ++i) {
      for (int dim = 0; dim < 2; ++dim) {
        const double h = dim == 0 ? sc.grad_x[i] + sc.wall_x[i]
                                  : sc.grad_y[i] + sc.wall_y[i];
        const double g = -h - v(i, dim);
        const double d = v(i + 1, dim) - v(i, dim);
        prec += delta_ * g * g / p.sigma2;
        lin += d * g / p.sigma2;
      }
    }
  }
  return {lin / prec, 1.0 / prec};
}

void GibbsSampler::sample_beta(Rng& rng) {
  const auto c = beta_conditional();
  params_.beta = truncated_normal_lower(c.mean, std::sqrt(c.var), 0.0, rng);
}

GibbsSampler::IgCond GibbsSampler::kappa2_conditional() const {
  double shape = params_.alpha_kappa;
  double rate = params_.beta_kappa;
  for (int s = 0; s < n_segments(); ++s) {
    const auto& sc = segments_[s];
    const Matrix& v = vel_[s];
    shape += static_cast<double>(sc.n - 1);
    for (long i = 0; i + 1 < sc.n; ++i) {
      const double rx = sc.dx[i] - sc.motility[i] * v(i, 0) * delta_;
      const double ry = sc.dy[i] - sc.motility[i] * v(i, 1) * delta_;
      rate += (rx * rx + ry * ry) / (2.0 * delta_);
    }
  }
  return {shape, rate};
}

void GibbsSampler::sample_kappa2(Rng& rng) {
  const auto c = kappa2_conditional();
  params_.kappa2 = rng.inverse_gamma(c.shape, c.rate);
  if (!(params_.kappa2 > 0.0))
    throw std::runtime_error("sample_kappa2: nonpositive draw");
}

GibbsSampler::NormalCond GibbsSampler::velocity_conditional(int s, long i,
                                                            int dim) const {
  const auto& p = params_;
  const auto& sc = segments_[s];
  const Matrix& v = vel_[s];
  const double var_v = p.sigma2 * delta_;
  const double c = 1.0 - p.beta * delta_;
  double prec = 0.0, lin = 0.0;
  if (i == 0) prec += 1.0 / p.tau_v1;
  if (i + 1 < sc.n) {
    // Location transition leaving i.
    const double m = sc.motility[i];
    const double d = dim == 0 ? sc.dx[i] : sc.dy[i];
    prec += m * m * delta_ / p.kappa2;
    lin += m * d / p.kappa2;
    // Forward velocity transition leaving i.
    const double h = dim == 0 ? sc.grad_x[i] + sc.wall_x[i]
                              : sc.grad_y[i] + sc.wall_y[i];
    prec += c * c / var_v;
    lin += c * (v(i + 1, dim) + p.beta * delta_ * h) / var_v;
  }
  if (i > 0) {
    const double h = dim == 0 ? sc.grad_x[i - 1] + sc.wall_x[i - 1]
                              : sc.grad_y[i - 1] + sc.wall_y[i - 1];
    const double mean_prev = c * v(i - 1, dim) - p.beta * delta_ * h;
    prec += 1.0 / var_v;
    lin += mean_prev / var_v;
  }
  if (!(prec > 0.0))
    throw std::runtime_error("velocity_conditional: nonpositive precision");
  return {lin / prec, 1.0 / prec};
}

void GibbsSampler::sample_velocities(Rng& rng) {
  const auto& p = params_;
  const double var_v = p.sigma2 * delta_;
  const double c = 1.0 - p.beta * delta_;
  for (int s = 0; s < n_segments(); ++s) {
    const auto& sc = segments_[s];
    Matrix& v = vel_[s];
    for (long i = 0; i < sc.n; ++i) {
      for (int dim = 0; dim < 2; ++dim) {
        double prec = 0.0, lin = 0.0;
        if (i == 0) prec += 1.0 / p.tau_v1;
        if (i + 1 < sc.n) {
          const double m = sc.motility[i];
          const double d = dim == 0 ? sc.dx[i] : sc.dy[i];
          prec += m * m * delta_ / p.kappa2;
          lin += m * d / p.kappa2;
          const double h = dim == 0 ? sc.grad_x[i] + sc.wall_x[i]
                                    : sc.grad_y[i] + sc.wall_y[i];
          prec += c * c / var_v;
          lin += c * (v(i + 1, dim) + p.beta * delta_ * h) / var_v;
        }
        if (i > 0) {
          const double h = dim == 0 ? sc.grad_x[i - 1] + sc.wall_x[i - 1]
                                    : sc.grad_y[i - 1] + sc.wall_y[i - 1];
          prec += 1.0 / var_v;
          lin += (c * v(i - 1, dim) - p.beta * delta_ * h) / var_v;
        }
        v(i, dim) = lin / prec + rng.gaussian() / std::sqrt(prec);
      }
    }
  }
}

GibbsSampler::MvnCond GibbsSampler::gamma_conditional() const {
  const auto& p = params_;
  const int n = n_coef();
  const int order = basis_x_.order();
  const int L = config_.basis_l;
  Matrix prec = car_precision(car_, p.tau_gamma, p.rho_gamma);
  prec += (p.beta * p.beta * delta_ / p.sigma2) * gamma_gram_;
  Vector lin = Vector::Zero(n);
  const double c = p.beta * delta_;
  for (int s = 0; s < n_segments(); ++s) {
    const auto& sc = segments_[s];
    const Matrix& v = vel_[s];
    for (long i = 0; i + 1 < sc.n; ++i) {
      const double rx = v(i + 1, 0) - v(i, 0) + c * (v(i, 0) + sc.wall_x[i]);
      const double ry = v(i + 1, 1) - v(i, 1) + c * (v(i, 1) + sc.wall_y[i]);
      for (int a = 0; a < order; ++a) {
        const int base = (sc.span_x[i] + a) * L + sc.span_y[i];
        for (int b = 0; b < order; ++b) {
          lin[base + b] -= (p.beta / p.sigma2) *
                           (sc.dbx(i, a) * sc.by(i, b) * rx +
                            sc.bx(i, a) * sc.dby(i, b) * ry);
        }
      }
    }
  }
  return {std::move(lin), std::move(prec)};
}

void GibbsSampler::sample_gamma(Rng& rng) {
  auto cond = gamma_conditional();
  Eigen::LLT<Matrix> llt(cond.precision);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sample_gamma: Cholesky failed");
  const Vector mean = llt.solve(cond.lin);
  Vector z(mean.size());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.gaussian();
  Vector draw = mean + llt.matrixU().solve(z);
  // Sum-to-zero with the conditional covariance: the projection direction
  // P^{-1} 1 comes from the same factorization.
  const Vector w = llt.solve(Vector::Ones(mean.size()));
  const double denom = w.sum();
  if (!(denom > 0.0)) throw std::runtime_error("sample_gamma: 1' P^{-1} 1 <= 0");
  gamma_ = draw - w * (draw.sum() / denom);
  for (auto& sc : segments_) refresh_potential(sc);
}

GibbsSampler::MvnCond GibbsSampler::alpha_conditional() const {
  const auto& p = params_;
  const int n = n_coef();
  const int order = basis_x_.order();
  const int L = config_.basis_l;
  const double tau = p.tau_alpha / (p.mu_alpha * p.mu_alpha);
  Matrix prec = car_precision(car_, tau, p.rho_alpha);
  Vector lin = (p.tau_alpha / p.mu_alpha) *
               (car_.degrees.asDiagonal() * Vector::Ones(n) -
                p.rho_alpha * (car_.adjacency * Vector::Ones(n)));
  std::array<double, 16> tensor;
  for (int s = 0; s < n_segments(); ++s) {
    const auto& sc = segments_[s];
    const Matrix& v = vel_[s];
    for (long i = 0; i + 1 < sc.n; ++i) {
      const double w = (v(i, 0) * v(i, 0) + v(i, 1) * v(i, 1)) * delta_ / p.kappa2;
      const double lw = (v(i, 0) * sc.dx[i] + v(i, 1) * sc.dy[i]) / p.kappa2;
      for (int a = 0; a < order; ++a)
        for (int b = 0; b < order; ++b)
          tensor[a * order + b] = sc.bx(i, a) * sc.by(i, b);
      for (int a = 0; a < order; ++a) {
        const int base_a = (sc.span_x[i] + a) * L + sc.span_y[i];
        for (int b = 0; b < order; ++b) {
          const double ta = tensor[a * order + b];
          lin[base_a + b] += lw * ta;
          for (int cix = 0; cix < order; ++cix) {
            const int base_c = (sc.span_x[i] + cix) * L + sc.span_y[i];
            for (int d = 0; d < order; ++d)
              prec(base_a + b, base_c + d) += w * ta * tensor[cix * order + d];
          }
        }
      }
    }
  }
  return {std::move(lin), std::move(prec)};
}

void GibbsSampler::sample_alpha(Rng& rng) {
  auto cond = alpha_conditional();
  Eigen::LLT<Matrix> llt(cond.precision);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sample_alpha: Cholesky failed");
  const Vector mean = llt.solve(cond.lin);
  Vector z(mean.size());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.gaussian();
  alpha_ = mean + llt.matrixU().solve(z);
  for (auto& sc : segments_) refresh_motility(sc);
}

GibbsSampler::GammaCond GibbsSampler::tau_gamma_conditional() const {
  const auto& p = params_;
  const double q = gamma_.dot(car_.degrees.asDiagonal() * gamma_) -
                   p.rho_gamma * gamma_.dot(car_.adjacency * gamma_);
  return {0.5 * n_coef() + 1.0, 0.5 * q + p.mu_alpha * p.mu_alpha};
}

void GibbsSampler::sample_tau_gamma(Rng& rng) {
  const auto c = tau_gamma_conditional();
  if (!(c.rate > 0.0)) throw std::runtime_error("sample_tau_gamma: nonpositive rate");
  params_.tau_gamma = rng.gamma(c.shape) / c.rate;
}

double GibbsSampler::logtarget_rho_gamma(double rho) const {
  const double q = gamma_.dot(car_.degrees.asDiagonal() * gamma_) -
                   rho * gamma_.dot(car_.adjacency * gamma_);
  return 0.5 * car_logdet(car_, car_eigs_, rho) - 0.5 * params_.tau_gamma * q;
}

double GibbsSampler::logtarget_rho_alpha(double rho) const {
  const auto& p = params_;
  const Vector e = alpha_ - Vector::Constant(n_coef(), p.mu_alpha);
  const double q = e.dot(car_.degrees.asDiagonal() * e) -
                   rho * e.dot(car_.adjacency * e);
  return 0.5 * car_logdet(car_, car_eigs_, rho) -
         0.5 * (p.tau_alpha / (p.mu_alpha * p.mu_alpha)) * q;
}

double GibbsSampler::logtarget_mu_alpha(double mu) const {
  if (std::abs(mu) < 1e-12) return kNegInf;
  const auto& p = params_;
  const int n = n_coef();
  const Vector e = alpha_ - Vector::Constant(n, mu);
  const double q = e.dot(car_.degrees.asDiagonal() * e) -
                   p.rho_alpha * e.dot(car_.adjacency * e);
  double lt = -n * std::log(std::abs(mu)) -
              0.5 * (p.tau_alpha / (mu * mu)) * q -
              0.5 * (mu - 1.0) * (mu - 1.0);
  if (config_.variant != FitVariant::no_potential)
    lt += std::log(mu * mu) - mu * mu * params_.tau_gamma;
  return lt;
}

double GibbsSampler::velocity_loglik_for_r1(double r1) const {
  const auto& p = params_;
  const WallField w(config_.wall_x_lo, config_.wall_x_hi, config_.wall_y_lo,
                    config_.wall_y_hi, r1);
  const double var_v = p.sigma2 * delta_;
  const double c = 1.0 - p.beta * delta_;
  double ss = 0.0;
  for (int s = 0; s < n_segments(); ++s) {
    const auto& sc = segments_[s];
    const Matrix& v = vel_[s];
    for (long i = 0; i + 1 < sc.n; ++i) {
      const auto wg = w.eval_grad(sc.x[i], sc.y[i]);
      double r = v(i + 1, 0) - c * v(i, 0) + p.beta * delta_ * (sc.grad_x[i] + wg.gx);
      ss += r * r;
      r = v(i + 1, 1) - c * v(i, 1) + p.beta * delta_ * (sc.grad_y[i] + wg.gy);
      ss += r * r;
    }
  }
  return -0.5 * ss / var_v;
}

double GibbsSampler::logtarget_r1(double r1) const {
  const double l = std::log(r1);
  return velocity_loglik_for_r1(r1) - l - 0.5 * (l - 10.0) * (l - 10.0);
}

bool GibbsSampler::mh_generic(const std::string& name, double& value,
                              double (GibbsSampler::*logtarget)(double) const,
                              double lo, double hi, int transform, Rng& rng) {
  auto& block = mh_.at(name);
  auto to_z = [&](double v) {
    switch (transform) {
      case 0: {
        const double u = (v - lo) / (hi - lo);
        return std::log(u / (1.0 - u));
      }
      case 1:
        return std::log(v);
      default:
        return v;
    }
  };
  auto from_z = [&](double z) {
    switch (transform) {
      case 0:
        return lo + (hi - lo) / (1.0 + std::exp(-z));
      case 1:
        return std::exp(z);
      default:
        return z;
    }
  };
  auto log_jacobian = [&](double v) {
    switch (transform) {
      case 0:
        return std::log((v - lo) * (hi - v) / (hi - lo));
      case 1:
        return std::log(v);
      default:
        return 0.0;
    }
  };
  double z = to_z(value);
  const bool accepted = block.step(
      z,
      [&](double zz) {
        const double v = from_z(zz);
        if (transform == 0 && !(v > lo && v < hi)) return kNegInf;
        if (transform == 1 && !(v > 0.0)) return kNegInf;
        return (this->*logtarget)(v) + log_jacobian(v);
      },
      rng);
  if (accepted) value = from_z(z);
  return accepted;
}

bool GibbsSampler::mh_rho_gamma(Rng& rng) {
  return mh_generic("rho_gamma", params_.rho_gamma,
                    &GibbsSampler::logtarget_rho_gamma, 0.01, 0.99, 0, rng);
}

bool GibbsSampler::mh_rho_alpha(Rng& rng) {
  return mh_generic("rho_alpha", params_.rho_alpha,
                    &GibbsSampler::logtarget_rho_alpha, 0.01, 0.99, 0, rng);
}

bool GibbsSampler::mh_mu_alpha(Rng& rng) {
  return mh_generic("mu_alpha", params_.mu_alpha,
                    &GibbsSampler::logtarget_mu_alpha, 0.0, 0.0, 2, rng);
}

bool GibbsSampler::mh_r1(Rng& rng) {
  const bool acc = mh_generic("r1", params_.r1, &GibbsSampler::logtarget_r1, 0.0,
                              0.0, 1, rng);
  if (acc)
    for (auto& sc : segments_) refresh_wall(sc, params_.r1);
  return acc;
}

void GibbsSampler::sweep(Rng& rng) {
  sample_velocities(rng);
  sample_beta(rng);
  sample_kappa2(rng);
  if (config_.variant != FitVariant::no_potential) {
    sample_gamma(rng);
    sample_tau_gamma(rng);
    mh_rho_gamma(rng);
  }
  if (config_.variant != FitVariant::no_motility) {
    sample_alpha(rng);
    mh_rho_alpha(rng);
    mh_mu_alpha(rng);
  }
  if (config_.wall_enabled && config_.sample_r1) mh_r1(rng);
}

PosteriorChain run_chain(const TrajectorySet& data, const FitConfig& config) {
  if (config.iterations < 0 || config.burn_in < 0 || config.thin < 1)
    throw std::invalid_argument("run_chain: bad iteration counts");
  GibbsSampler sampler(data, config);
  Rng rng(config.seed);

  PosteriorChain chain;
  chain.config = config;
  chain.delta = data.delta;
  const long retained =
      config.iterations > config.burn_in
          ? (config.iterations - config.burn_in + config.thin - 1) / config.thin
          : 0;
  chain.gamma_draws.resize(retained, sampler.n_coef());
  chain.alpha_draws.resize(retained, sampler.n_coef());

  long kept = 0;
  for (long it = 0; it < config.iterations; ++it) {
    if (it == config.burn_in) sampler.set_adapting(false);
    sampler.sweep(rng);
    if (it < config.burn_in || (it - config.burn_in) % config.thin != 0) continue;
    const auto& p = sampler.params();
    chain.beta.push_back(p.beta);
    chain.kappa2.push_back(p.kappa2);
    chain.tau_gamma.push_back(p.tau_gamma);
    chain.rho_gamma.push_back(p.rho_gamma);
    chain.rho_alpha.push_back(p.rho_alpha);
    chain.mu_alpha.push_back(p.mu_alpha);
    chain.r1.push_back(p.r1);
    chain.log_joint.push_back(sampler.log_joint_cached());
    chain.gamma_draws.row(kept) = sampler.gamma().transpose();
    chain.alpha_draws.row(kept) = sampler.alpha().transpose();
    if (config.velocity_draw_stride > 0 &&
        kept % config.velocity_draw_stride == 0)
      chain.velocity_draws.emplace_back(kept, sampler.velocities());
    ++kept;
  }
  for (const auto& [name, block] : sampler.mh_blocks())
    chain.acceptance[name] = block.acceptance_rate();
  return chain;
}

double batch_means_mcse(const std::vector<double>& samples) {
  const long n = static_cast<long>(samples.size());
  if (n < 4) throw std::invalid_argument("batch_means_mcse: need at least 4 samples");
  const long n_batches = static_cast<long>(std::floor(std::sqrt(double(n))));
  const long batch = n / n_batches;
  const long used = n_batches * batch;
  double grand = 0.0;
  for (long i = 0; i < used; ++i) grand += samples[i];
  grand /= used;
  double ss = 0.0;
  for (long b = 0; b < n_batches; ++b) {
    double m = 0.0;
    for (long i = b * batch; i < (b + 1) * batch; ++i) m += samples[i];
    m /= batch;
    ss += (m - grand) * (m - grand);
  }
  const double var = batch * ss / (n_batches - 1);
  return std::sqrt(var / used);
}

void save_chain(const PosteriorChain& chain, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "params.csv");
    out.precision(12);
    out << "beta,kappa2,tau_gamma,rho_gamma,rho_alpha,mu_alpha,r1,log_joint\n";
    for (long i = 0; i < chain.retained(); ++i)
      out << chain.beta[i] << ',' << chain.kappa2[i] << ',' << chain.tau_gamma[i]
          << ',' << chain.rho_gamma[i] << ',' << chain.rho_alpha[i] << ','
          << chain.mu_alpha[i] << ',' << chain.r1[i] << ',' << chain.log_joint[i]
          << '\n';
  }
  auto write_matrix = [&](const Matrix& m, const std::string& name) {
    std::ofstream out(fs::path(out_dir) / name);
    out.precision(12);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        out << m(i, j) << (j + 1 < m.cols() ? "," : "");
      out << '\n';
    }
  };
  write_matrix(chain.gamma_draws, "gamma.csv");
  write_matrix(chain.alpha_draws, "alpha.csv");

  if (!chain.velocity_draws.empty()) {
    std::ofstream out(fs::path(out_dir) / "velocities.csv");
    out.precision(12);
    out << "draw,segment,row,vx,vy\n";
    for (const auto& [kept, vels] : chain.velocity_draws)
      for (std::size_t s = 0; s < vels.size(); ++s)
        for (Eigen::Index i = 0; i < vels[s].rows(); ++i)
          out << kept << ',' << s << ',' << i << ',' << vels[s](i, 0) << ','
              << vels[s](i, 1) << '\n';
  }

  nlohmann::json manifest;
  manifest["seed"] = chain.config.seed;
  manifest["iterations"] = chain.config.iterations;
  manifest["burn_in"] = chain.config.burn_in;
  manifest["thin"] = chain.config.thin;
  manifest["retained"] = chain.retained();
  manifest["delta"] = chain.delta;
  manifest["basis"] = {chain.config.basis_k, chain.config.basis_l};
  manifest["domain"] = {chain.config.x_lo, chain.config.y_lo, chain.config.x_hi,
                        chain.config.y_hi};
  manifest["variant"] = chain.config.variant == FitVariant::full ? "full"
                        : chain.config.variant == FitVariant::no_potential
                            ? "no_potential"
                            : "no_motility";
  manifest["velocity_draw_stride"] = chain.config.velocity_draw_stride;
  manifest["wall"] = {{"enabled", chain.config.wall_enabled},
                      {"sample_r1", chain.config.sample_r1},
                      {"bounds",
                       {chain.config.wall_x_lo, chain.config.wall_y_lo,
                        chain.config.wall_x_hi, chain.config.wall_y_hi}}};
  manifest["acceptance"] = chain.acceptance;
  if (chain.retained() >= 4) {
    manifest["mcse"] = {{"beta", batch_means_mcse(chain.beta)},
                        {"kappa2", batch_means_mcse(chain.kappa2)},
                        {"mu_alpha", batch_means_mcse(chain.mu_alpha)}};
  }
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  out << manifest.dump(2) << "\n";
}

PosteriorChain load_chain(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream min(fs::path(dir) / "manifest.json");
  if (!min) throw std::runtime_error("load_chain: cannot open manifest in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(min);

  PosteriorChain chain;
  chain.config.seed = manifest.at("seed").get<std::uint64_t>();
  chain.config.iterations = manifest.at("iterations").get<long>();
  chain.config.burn_in = manifest.at("burn_in").get<long>();
  chain.config.thin = manifest.at("thin").get<long>();
  chain.delta = manifest.at("delta").get<double>();
  chain.config.basis_k = manifest.at("basis")[0].get<int>();
  chain.config.basis_l = manifest.at("basis")[1].get<int>();
  const auto& dom = manifest.at("domain");
  chain.config.x_lo = dom[0].get<double>();
  chain.config.y_lo = dom[1].get<double>();
  chain.config.x_hi = dom[2].get<double>();
  chain.config.y_hi = dom[3].get<double>();
  const std::string variant = manifest.at("variant").get<std::string>();
  chain.config.variant = variant == "full"           ? FitVariant::full
                         : variant == "no_potential" ? FitVariant::no_potential
                                                     : FitVariant::no_motility;
  chain.config.velocity_draw_stride =
      manifest.value("velocity_draw_stride", 0L);
  if (manifest.contains("wall")) {
    const auto& w = manifest["wall"];
    chain.config.wall_enabled = w.at("enabled").get<bool>();
    chain.config.sample_r1 = w.at("sample_r1").get<bool>();
    chain.config.wall_x_lo = w.at("bounds")[0].get<double>();
    chain.config.wall_y_lo = w.at("bounds")[1].get<double>();
    chain.config.wall_x_hi = w.at("bounds")[2].get<double>();
    chain.config.wall_y_hi = w.at("bounds")[3].get<double>();
  }
  if (manifest.contains("acceptance"))
    chain.acceptance =
        manifest["acceptance"].get<std::map<std::string, double>>();

  {
    std::ifstream in(fs::path(dir) / "params.csv");
    if (!in) throw std::runtime_error("load_chain: cannot open params.csv in " + dir);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      double v[8];
      if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &v[0],
                      &v[1], &v[2], &v[3], &v[4], &v[5], &v[6], &v[7]) != 8)
        throw std::runtime_error("load_chain: malformed params.csv row");
      chain.beta.push_back(v[0]);
      chain.kappa2.push_back(v[1]);
      chain.tau_gamma.push_back(v[2]);
      chain.rho_gamma.push_back(v[3]);
      chain.rho_alpha.push_back(v[4]);
      chain.mu_alpha.push_back(v[5]);
      chain.r1.push_back(v[6]);
      chain.log_joint.push_back(v[7]);
    }
  }

  auto read_matrix = [&](const std::string& name, long rows, long cols) {
    Matrix m(rows, cols);
    std::ifstream in(fs::path(dir) / name);
    if (!in) throw std::runtime_error("load_chain: cannot open " + name);
    std::string line;
    for (long i = 0; i < rows; ++i) {
      if (!std::getline(in, line))
        throw std::runtime_error("load_chain: truncated " + name);
      std::stringstream ss(line);
      std::string cell;
      for (long j = 0; j < cols; ++j) {
        if (!std::getline(ss, cell, ','))
          throw std::runtime_error("load_chain: short row in " + name);
        m(i, j) = std::stod(cell);
      }
    }
    return m;
  };
  const long n = chain.retained();
  const long ncoef = static_cast<long>(chain.config.basis_k) * chain.config.basis_l;
  chain.gamma_draws = read_matrix("gamma.csv", n, ncoef);
  chain.alpha_draws = read_matrix("alpha.csv", n, ncoef);

  if (fs::exists(fs::path(dir) / "velocities.csv")) {
    std::ifstream in(fs::path(dir) / "velocities.csv");
    std::string line;
    std::getline(in, line);  // header
    long cur_draw = -1;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      long draw, seg, row;
      double vx, vy;
      if (std::sscanf(line.c_str(), "%ld,%ld,%ld,%lf,%lf", &draw, &seg, &row,
                      &vx, &vy) != 5)
        throw std::runtime_error("load_chain: malformed velocities.csv row");
      if (draw != cur_draw) {
        chain.velocity_draws.emplace_back(draw, std::vector<Matrix>{});
        cur_draw = draw;
      }
      auto& vels = chain.velocity_draws.back().second;
      if (seg == static_cast<long>(vels.size())) vels.emplace_back(0, 2);
      Matrix& m = vels[seg];
      if (row == m.rows()) m.conservativeResize(row + 1, 2);
      m(row, 0) = vx;
      m(row, 1) = vy;
    }
  }
  return chain;
}

}  // namespace svsde
