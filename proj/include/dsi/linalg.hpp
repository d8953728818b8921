#pragma once

#include <Eigen/Dense>

namespace dsi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Symmetric factor of a symmetric PSD matrix.
struct SymmetricFactor {
  Matrix factor;           ///< L with L*L^T equal to the repaired matrix.
  Matrix repaired;         ///< Symmetrised input with eigenvalues clamped at the floor.
  Eigen::Index clamped{0}; ///< Number of eigenvalues raised to the floor.
};

/// Symmetrises `a` and builds L = V*sqrt(max(Lambda, floor)) from its
/// eigendecomposition. Eigenvalues below -tolerance raise NumericalError when
/// tolerance >= 0; pass a negative tolerance to clamp unconditionally.
SymmetricFactor symmetric_factor(const Matrix& a, double floor, double tolerance = -1.0);

/// 0.5*(a + a^T); the result is bit-exactly symmetric.
Matrix symmetrize(const Matrix& a);

/// Relative Frobenius distance ||a - b|| / ||b||.
double relative_frobenius(const Matrix& a, const Matrix& b);

}  // namespace dsi
