#pragma once

#include <array>
#include <utility>
#include <vector>

#include "svsde/types.hpp"

namespace svsde {

/// Clamped univariate B-spline basis (Cox-de Boor).
///
/// `order` is the spline order (degree + 1); boundary knots are repeated
/// `order` times, so the basis forms a partition of unity on [lo, hi].
class SplineBasis {
 public:
  /// Uniform clamped knots on [lo, hi] with `count` basis functions.
  SplineBasis(int order, int count, double lo, double hi);

  int order() const { return order_; }
  int count() const { return count_; }
  double lo() const { return knots_[order_ - 1]; }
  double hi() const { return knots_[knots_.size() - order_]; }
  const std::vector<double>& knots() const { return knots_; }

  /// Dense basis values and first derivatives at u; both vectors have
  /// length count(). Values sum to 1, derivatives to 0.
  std::pair<Vector, Vector> eval_with_deriv(double u) const;

  /// Sparse evaluation: only the `order` basis functions supported at u are
  /// nonzero. Returns the index of the first of them plus their values and
  /// derivatives (entries beyond `order` unused).
  struct Local {
    int first = 0;
    std::array<double, 8> value{};
    std::array<double, 8> deriv{};
  };
  Local eval_local(double u) const;

 private:
  int find_span(double u) const;

  int order_;
  int count_;
  std::vector<double> knots_;
};

/// Tensor-product B-spline surface with coefficient grid (count_x x count_y).
struct TensorSurface {
  SplineBasis basis_x;
  SplineBasis basis_y;
  Matrix coeffs;        // (basis_x.count() x basis_y.count())
  bool constrained = false;  // coefficients sum to zero

  TensorSurface(SplineBasis bx, SplineBasis by, Matrix c, bool constr = false);

  double eval(double x, double y) const;
  Vec2 grad(double x, double y) const;
};

/// Exponential wall-repulsion potential on a rectangular box.
struct WallField {
  double x_lo, x_hi, y_lo, y_hi;
  double decay;  // r1 > 0

  WallField(double xl, double xu, double yl, double yu, double r1);

  struct ValueGrad {
    double value;
    double gx;
    double gy;
  };
  ValueGrad eval_grad(double x, double y) const;
};

/// Gradient of the combined potential (spline surface + wall repulsion).
Vec2 potential_grad(const TensorSurface& h, const WallField& w, double x, double y);

/// Project unconstrained coefficients onto the sum-to-zero subspace:
///   g - Sigma 1 (1' Sigma 1)^{-1} (1' g).
Vector sum_to_zero(const Vector& unconstrained, const Matrix& covariance);

}  // namespace svsde
