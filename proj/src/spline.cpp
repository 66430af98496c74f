#include "svsde/spline.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace svsde {

SplineBasis::SplineBasis(int order, int count, double lo, double hi)
    : order_(order), count_(count) {
  if (order < 2) throw std::invalid_argument("SplineBasis: order must be >= 2");
  if (count < order) throw std::invalid_argument("SplineBasis: count must be >= order");
  if (!(lo < hi)) throw std::invalid_argument("SplineBasis: lo must be < hi");
  const int n_interior = count - order;  // knots strictly inside (lo, hi)
  knots_.reserve(count + order);
  for (int i = 0; i < order; ++i) knots_.push_back(lo);
  for (int i = 1; i <= n_interior; ++i)
    knots_.push_back(lo + (hi - lo) * i / (n_interior + 1));
  for (int i = 0; i < order; ++i) knots_.push_back(hi);
}

int SplineBasis::find_span(double u) const {
  if (!(u >= lo() && u <= hi())) {
    std::ostringstream msg;
    msg << "SplineBasis: u=" << u << " outside domain [" << lo() << ", " << hi() << "]";
    throw std::domain_error(msg.str());
  }
  // Span s with knots_[s] <= u < knots_[s+1]; u == hi maps to the last
  // nonempty span.
  int s = order_ - 1;
  int e = count_;  // one past the last nonempty span start
  while (s + 1 < e && u >= knots_[s + 1]) ++s;
  if (u >= knots_[count_]) s = count_ - 1;
  return s;
}

SplineBasis::Local SplineBasis::eval_local(double u) const {
  const int span = find_span(u);
  const int p = order_ - 1;  // degree
  Local out;
  out.first = span - p;

  // Cox-de Boor triangle, keeping the degree p-1 row for derivatives.
  std::array<double, 8> left{}, right{}, nd{}, lower{};
  nd[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = u - knots_[span + 1 - j];
    right[j] = knots_[span + j] - u;
    if (j == p) lower = nd;  // degree p-1 values over spans span-j+1..span
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom > 0.0 ? nd[r] / denom : 0.0;
      nd[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    nd[j] = saved;
  }
  if (p == 1) lower[0] = 1.0;  // degree-0 value on the current span

  for (int i = 0; i <= p; ++i) out.value[i] = nd[i];

  // B'_{k,p}(u) = p [ B_{k,p-1}/(t_{k+p}-t_k) - B_{k+1,p-1}/(t_{k+p+1}-t_{k+1}) ].
  // lower[r] holds B_{span-p+1+r, p-1}(u) for r = 0..p-1.
  for (int i = 0; i <= p; ++i) {
    const int k = out.first + i;
    double d = 0.0;
    const int r_self = i - 1;  // position of B_{k,p-1} in `lower`
    if (r_self >= 0 && r_self <= p - 1) {
      const double denom = knots_[k + p] - knots_[k];
      if (denom > 0.0) d += lower[r_self] / denom;
    }
    const int r_next = i;  // position of B_{k+1,p-1}
    if (r_next <= p - 1) {
      const double denom = knots_[k + p + 1] - knots_[k + 1];
      if (denom > 0.0) d -= lower[r_next] / denom;
    }
    out.deriv[i] = p * d;
  }
  return out;
}

std::pair<Vector, Vector> SplineBasis::eval_with_deriv(double u) const {
  const Local loc = eval_local(u);
  Vector w = Vector::Zero(count_);
  Vector dw = Vector::Zero(count_);
  for (int i = 0; i < order_; ++i) {
    w[loc.first + i] = loc.value[i];
    dw[loc.first + i] = loc.deriv[i];
  }
  return {std::move(w), std::move(dw)};
}

TensorSurface::TensorSurface(SplineBasis bx, SplineBasis by, Matrix c, bool constr)
    : basis_x(std::move(bx)), basis_y(std::move(by)), coeffs(std::move(c)),
      constrained(constr) {
  if (coeffs.rows() != basis_x.count() || coeffs.cols() != basis_y.count())
    throw std::invalid_argument("TensorSurface: coefficient shape mismatch");
  if (constrained && std::abs(coeffs.sum()) > 1e-10)
    throw std::invalid_argument("TensorSurface: constrained coefficients do not sum to 0");
}

double TensorSurface::eval(double x, double y) const {
  const auto lx = basis_x.eval_local(x);
  const auto ly = basis_y.eval_local(y);
  double s = 0.0;
  for (int i = 0; i < basis_x.order(); ++i)
    for (int j = 0; j < basis_y.order(); ++j)
      s += coeffs(lx.first + i, ly.first + j) * lx.value[i] * ly.value[j];
  return s;
}

Vec2 TensorSurface::grad(double x, double y) const {
  const auto lx = basis_x.eval_local(x);
  const auto ly = basis_y.eval_local(y);
  double gx = 0.0, gy = 0.0;
  for (int i = 0; i < basis_x.order(); ++i)
    for (int j = 0; j < basis_y.order(); ++j) {
      const double c = coeffs(lx.first + i, ly.first + j);
      gx += c * lx.deriv[i] * ly.value[j];
      gy += c * lx.value[i] * ly.deriv[j];
    }
  return {gx, gy};
}

WallField::WallField(double xl, double xu, double yl, double yu, double r1)
    : x_lo(xl), x_hi(xu), y_lo(yl), y_hi(yu), decay(r1) {
  if (!(x_lo < x_hi) || !(y_lo < y_hi))
    throw std::invalid_argument("WallField: degenerate bounds");
  if (!(decay > 0.0)) throw std::invalid_argument("WallField: decay must be > 0");
}

WallField::ValueGrad WallField::eval_grad(double x, double y) const {
  const double exl = std::exp(-decay * (x - x_lo));
  const double exu = std::exp(decay * (x - x_hi));
  const double eyl = std::exp(-decay * (y - y_lo));
  const double eyu = std::exp(decay * (y - y_hi));
  return {exl + exu + eyl + eyu,
          decay * (exu - exl),
          decay * (eyu - eyl)};
}

Vec2 potential_grad(const TensorSurface& h, const WallField& w, double x, double y) {
  const Vec2 g = h.grad(x, y);
  const auto wg = w.eval_grad(x, y);
  return {g[0] + wg.gx, g[1] + wg.gy};
}

Vector sum_to_zero(const Vector& unconstrained, const Matrix& covariance) {
  if (covariance.rows() != unconstrained.size() ||
      covariance.cols() != unconstrained.size())
    throw std::invalid_argument("sum_to_zero: dimension mismatch");
  const Vector s1 = covariance * Vector::Ones(unconstrained.size());
  const double denom = s1.sum();  // 1' Sigma 1
  if (!(denom > 0.0)) throw std::runtime_error("sum_to_zero: 1' Sigma 1 not positive");
  return unconstrained - s1 * (unconstrained.sum() / denom);
}

}  // namespace svsde
