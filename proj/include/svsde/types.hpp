#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <random>

namespace svsde {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;

/// Deterministic RNG stream. All stochastic operations take one of these
/// explicitly; identical seeds give identical draws within a build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, std::uint64_t stream) {
    std::seed_seq seq{master, stream, std::uint64_t{0x9e3779b97f4a7c15}};
    engine_.seed(std::mt19937_64(seq)());
  }

  double gaussian() { return normal_(engine_); }
  double gaussian(double mean, double sd) { return mean + sd * normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  double gamma(double shape) {
    std::gamma_distribution<double> g(shape, 1.0);
    return g(engine_);
  }
  /// Inverse-gamma(shape, rate): X = rate / Gamma(shape,1).
  double inverse_gamma(double shape, double rate) { return rate / gamma(shape); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Standard normal inverse CDF (Wichura's AS 241, double precision).
double norm_quantile(double p);

/// Standard normal CDF.
double norm_cdf(double x);

/// Draw from N(mean, sd^2) truncated to (lo, inf) by inverse-CDF.
double truncated_normal_lower(double mean, double sd, double lo, Rng& rng);

}  // namespace svsde
