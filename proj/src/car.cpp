#include "svsde/car.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace svsde {

CarStructure build_car(int K, int L) {
  if (K < 1 || L < 1) throw std::invalid_argument("build_car: grid dims must be >= 1");
  CarStructure c;
  c.K = K;
  c.L = L;
  const int n = K * L;
  c.adjacency = Matrix::Zero(n, n);
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < L; ++l) {
      const int idx = k * L + l;
      if (k + 1 < K) {
        c.adjacency(idx, idx + L) = 1.0;
        c.adjacency(idx + L, idx) = 1.0;
      }
      if (l + 1 < L) {
        c.adjacency(idx, idx + 1) = 1.0;
        c.adjacency(idx + 1, idx) = 1.0;
      }
    }
  c.degrees = c.adjacency.rowwise().sum();
  return c;
}

Matrix car_precision(const CarStructure& c, double tau, double rho) {
  if (!(tau > 0.0)) throw std::invalid_argument("car_precision: tau must be > 0");
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("car_precision: rho must be in (0, 1)");
  Matrix p = -rho * c.adjacency;
  p.diagonal() += c.degrees;
  return tau * p;
}

Vector car_scaled_eigenvalues(const CarStructure& c) {
  const Vector dinv_sqrt = c.degrees.cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  const Matrix scaled =
      dinv_sqrt.asDiagonal() * c.adjacency * dinv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> es(scaled, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double car_logdet(const CarStructure& c, const Vector& scaled_eigs, double rho) {
  double ld = c.degrees.array().log().sum();
  for (int i = 0; i < scaled_eigs.size(); ++i) {
    const double t = 1.0 - rho * scaled_eigs[i];
    if (!(t > 0.0)) throw std::runtime_error("car_logdet: precision not PD");
    ld += std::log(t);
  }
  return ld;
}

Vector sample_gaussian_precision(const Vector& mean, const Matrix& precision, Rng& rng) {
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sample_gaussian_precision: Cholesky failed");
  Vector z(mean.size());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.gaussian();
  // x = mean + L^{-T} z  =>  cov(x) = P^{-1}
  return mean + llt.matrixU().solve(z);
}

}  // namespace svsde
