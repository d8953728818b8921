#include "dsi/linalg.hpp"

#include "dsi/error.hpp"

#include <Eigen/Eigenvalues>
#include <string>

namespace dsi {

Matrix symmetrize(const Matrix& a) {
  Matrix s = a;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = j; i < a.rows(); ++i) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      s(i, j) = v;
      s(j, i) = v;
    }
  return s;
}

SymmetricFactor symmetric_factor(const Matrix& a, double floor, double tolerance) {
  if (a.rows() != a.cols()) throw ConfigError("symmetric_factor: matrix is not square");
  SymmetricFactor out;
  const Matrix sym = symmetrize(a);
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric_factor: eigensolver failed");
  Vector lambda = es.eigenvalues();
  if (tolerance >= 0.0 && lambda.size() > 0 && lambda.minCoeff() < -tolerance)
    throw NumericalError("symmetric_factor: eigenvalue " + std::to_string(lambda.minCoeff()) +
                         " below -" + std::to_string(tolerance));
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < floor) {
      lambda(i) = floor;
      ++out.clamped;
    }
  }
  out.factor = es.eigenvectors() * lambda.cwiseSqrt().asDiagonal();
  out.repaired = symmetrize(out.factor * out.factor.transpose());
  return out;
}

double relative_frobenius(const Matrix& a, const Matrix& b) {
  const double denom = b.norm();
  return denom > 0.0 ? (a - b).norm() / denom : (a - b).norm();
}

}  // namespace dsi
