#pragma once

#include "dsi/linalg.hpp"

#include <cstddef>
#include <utility>

namespace dsi {

/// Uniform cell-centred grid on (0, lx) x (0, ly). Cell (i, j) has flat index
/// j*nx + i, so x varies fastest.
class Grid {
public:
  Grid() = default;
  Grid(int nx, int ny, double lx, double ly);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double lx() const { return lx_; }
  double ly() const { return ly_; }
  double dx() const { return lx_ / nx_; }
  double dy() const { return ly_ / ny_; }
  double cell_area() const { return dx() * dy(); }
  Eigen::Index cells() const { return static_cast<Eigen::Index>(nx_) * ny_; }

  Eigen::Index index(int i, int j) const { return static_cast<Eigen::Index>(j) * nx_ + i; }
  std::pair<double, double> centre(Eigen::Index cell) const;

  /// Cell containing (x, y); points on an interior cell edge belong to the
  /// cell on the upper side. Throws ConfigError outside the closed domain.
  Eigen::Index containing_cell(double x, double y) const;

  friend bool operator==(const Grid&, const Grid&) = default;

private:
  int nx_{1};
  int ny_{1};
  double lx_{1.0};
  double ly_{1.0};
};

/// Squared-exponential covariance sigma^2 exp(-r^2 / (2 l^2)) with constant mean.
struct CovarianceModel {
  double sigma{0.75};
  double lengthscale{250.0};
  double mean{-31.0};

  void validate() const;
  double operator()(double r2) const;
};

/// Scalar per cell. Units depend on context (ln m^2, m^2 or Pa).
struct Field {
  Grid grid;
  Vector values;

  Field() = default;
  Field(Grid g, Vector v);
  static Field constant(const Grid& g, double value);
};

/// Leading eigenpairs of a symmetric matrix, largest first.
struct EigenPairs {
  Vector eigenvalues;
  Matrix modes;               ///< One orthonormal column per eigenvalue.
  double total_variance{0.0}; ///< Trace of the decomposed matrix.
};

/// Truncated Karhunen-Loeve basis of a discretised Gaussian random field.
struct KLBasis {
  Grid grid;
  Vector mean;
  EigenPairs spectrum;

  Eigen::Index n_modes() const { return spectrum.eigenvalues.size(); }
  /// Fraction of the total variance captured by the retained modes.
  double retained_fraction() const;
  /// Throws NumericalError if ordering, non-negativity or orthonormality fail.
  void check_invariants(double orthonormality_tol = 1e-8) const;
};

/// Dense covariance of the field at cell centres (midpoint collocation).
Matrix build_covariance_matrix(const Grid& grid, const CovarianceModel& model);

/// Matrices up to this order are decomposed densely by truncated_kl.
inline constexpr Eigen::Index kDenseEigenLimit = 1000;

/// The n_modes largest eigenpairs of a symmetric matrix. Small problems (or a
/// large share of the spectrum) use a dense solve; otherwise block subspace
/// iteration resolves the leading modes to residual 1e-11 * lambda_max.
/// Eigenvalues in [-eps, 0) are clamped to zero with eps = 1e-8 * trace(cov);
/// anything more negative among those inspected is a NumericalError.
/// Asymmetric input is a ConfigError.
EigenPairs truncated_kl(const Matrix& cov, Eigen::Index n_modes);

KLBasis build_kl_basis(const Grid& grid, const CovarianceModel& model, Eigen::Index n_modes);

/// mean + sum_i sqrt(lambda_i) v_i xi_i.
Field sample_field(const KLBasis& basis, const Vector& xi);

/// Cellwise exponential, e.g. log-permeability to permeability.
Field exp_field(const Field& u);

}  // namespace dsi
