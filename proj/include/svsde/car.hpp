#pragma once

#include "svsde/types.hpp"

namespace svsde {

/// Rook-neighbor conditional autoregressive structure on a K x L
/// coefficient lattice. Coefficient (k, l) maps to flat index k * L + l.
struct CarStructure {
  int K = 0;
  int L = 0;
  Matrix adjacency;   // Q: 0/1, symmetric, zero diagonal
  Vector degrees;     // diag(D): number of neighbors

  int size() const { return K * L; }
};

CarStructure build_car(int K, int L);

/// Precision matrix tau (D - rho Q); positive definite for rho in (0, 1).
Matrix car_precision(const CarStructure& c, double tau, double rho);

/// Eigenvalues of D^{-1/2} Q D^{-1/2}; with these,
/// logdet(D - rho Q) = sum(log d_j) + sum(log(1 - rho lambda_j)).
Vector car_scaled_eigenvalues(const CarStructure& c);

double car_logdet(const CarStructure& c, const Vector& scaled_eigs, double rho);

/// Draw from N(mean, P^{-1}) given the precision matrix P (via Cholesky).
Vector sample_gaussian_precision(const Vector& mean, const Matrix& precision, Rng& rng);

}  // namespace svsde
