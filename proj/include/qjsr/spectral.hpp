#pragma once

// Small dense-matrix spectral helpers shared by the bracket and Lyapunov
// machinery: spectral norm (largest singular value) and spectral radius.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>

#include "qjsr/types.hpp"

namespace qjsr {

/// Largest singular value, via the symmetric eigenproblem on A^T A.
inline double spectral_norm(const Matrix& a) {
  if (a.rows() == 1 && a.cols() == 1) return std::abs(a(0, 0));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a.transpose() * a);
  const double top = eig.eigenvalues().maxCoeff();
  return top > 0.0 ? std::sqrt(top) : 0.0;
}

/// Spectral radius: largest eigenvalue modulus.
inline double spectral_radius(const Matrix& a) {
  if (a.rows() == 1 && a.cols() == 1) return std::abs(a(0, 0));
  Eigen::EigenSolver<Matrix> eig(a, /*computeEigenvectors=*/false);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

/// Real direction of a dominant eigenvector (eigenvalue of largest
/// modulus), normalized to unit Euclidean length.
inline Vector dominant_eigenvector(const Matrix& a) {
  if (a.rows() == 1 && a.cols() == 1) {
    Vector v(1);
    v(0) = 1.0;
    return v;
  }
  Eigen::EigenSolver<Matrix> eig(a);
  int best = 0;
  double best_mod = std::abs(eig.eigenvalues()(0));
  for (int i = 1; i < a.rows(); ++i) {
    const double mod = std::abs(eig.eigenvalues()(i));
    if (mod > best_mod) {
      best_mod = mod;
      best = i;
    }
  }
  Vector v = eig.eigenvectors().col(best).real();
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

}  // namespace qjsr
