#include "dsi/grf.hpp"

#include "dsi/error.hpp"
#include "dsi/stats.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dsi {

Grid::Grid(int nx, int ny, double lx, double ly) : nx_(nx), ny_(ny), lx_(lx), ly_(ly) {
  if (nx < 1 || ny < 1) throw ConfigError("Grid: cell counts must be >= 1");
  if (!(lx > 0.0) || !(ly > 0.0) || !std::isfinite(lx) || !std::isfinite(ly))
    throw ConfigError("Grid: extents must be positive and finite");
}

std::pair<double, double> Grid::centre(Eigen::Index cell) const {
  const auto i = static_cast<double>(cell % nx_);
  const auto j = static_cast<double>(cell / nx_);
  return {(i + 0.5) * dx(), (j + 0.5) * dy()};
}

Eigen::Index Grid::containing_cell(double x, double y) const {
  if (!(x >= 0.0 && x <= lx_ && y >= 0.0 && y <= ly_))
    throw ConfigError("point (" + std::to_string(x) + ", " + std::to_string(y) +
                      ") lies outside the domain");
  const int i = std::min(nx_ - 1, static_cast<int>(std::floor(x / dx())));
  const int j = std::min(ny_ - 1, static_cast<int>(std::floor(y / dy())));
  return index(i, j);
}

void CovarianceModel::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("covariance: sigma must be positive");
  if (!(lengthscale > 0.0)) throw ConfigError("covariance: lengthscale must be positive");
  if (!std::isfinite(mean)) throw ConfigError("covariance: mean must be finite");
}

double CovarianceModel::operator()(double r2) const {
  return sigma * sigma * std::exp(-r2 / (2.0 * lengthscale * lengthscale));
}

Field::Field(Grid g, Vector v) : grid(std::move(g)), values(std::move(v)) {
  if (values.size() != grid.cells())
    throw ConfigError("Field: expected " + std::to_string(grid.cells()) + " values, got " +
                      std::to_string(values.size()));
  if (!values.allFinite()) throw SimulationError("Field: non-finite value");
}

Field Field::constant(const Grid& g, double value) {
  return Field(g, Vector::Constant(g.cells(), value));
}

double KLBasis::retained_fraction() const {
  return spectrum.total_variance > 0.0 ? spectrum.eigenvalues.sum() / spectrum.total_variance
                                       : 0.0;
}

void KLBasis::check_invariants(double orthonormality_tol) const {
  const auto& lambda = spectrum.eigenvalues;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < 0.0) throw NumericalError("KLBasis: negative eigenvalue");
    if (i > 0 && lambda(i) > lambda(i - 1)) throw NumericalError("KLBasis: eigenvalues not sorted");
  }
  if (spectrum.modes.rows() != grid.cells() || spectrum.modes.cols() != lambda.size())
    throw NumericalError("KLBasis: mode matrix has wrong shape");
  const Matrix gram = spectrum.modes.transpose() * spectrum.modes;
  const double err = (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  if (lambda.size() > 0 && err > orthonormality_tol)
    throw NumericalError("KLBasis: modes not orthonormal (" + std::to_string(err) + ")");
}

Matrix build_covariance_matrix(const Grid& grid, const CovarianceModel& model) {
  model.validate();
  const Eigen::Index n = grid.cells();
  Matrix cov(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto [xj, yj] = grid.centre(j);
    cov(j, j) = model.sigma * model.sigma;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const auto [xi, yi] = grid.centre(i);
      const double r2 = (xi - xj) * (xi - xj) + (yi - yj) * (yi - yj);
      cov(i, j) = cov(j, i) = model(r2);
    }
  }
  return cov;
}

namespace {

// Eigenpairs in descending order with the largest-magnitude entry of each
// vector made positive, so the basis is reproducible across solvers.
EigenPairs leading(const Vector& w_desc, const Matrix& v_desc, Eigen::Index k, double trace) {
  EigenPairs out;
  out.total_variance = trace;
  out.eigenvalues.resize(k);
  out.modes.resize(v_desc.rows(), k);
  for (Eigen::Index i = 0; i < k; ++i) {
    out.eigenvalues(i) = std::max(0.0, w_desc(i));
    Eigen::Index arg;
    v_desc.col(i).cwiseAbs().maxCoeff(&arg);
    out.modes.col(i) = v_desc(arg, i) < 0.0 ? Vector(-v_desc.col(i)) : Vector(v_desc.col(i));
  }
  return out;
}

Matrix orthonormal_basis(const Matrix& y) {
  Eigen::HouseholderQR<Matrix> qr(y);
  return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

// Block subspace iteration with Rayleigh-Ritz extraction. Only matrix-block
// products touch the full matrix, so the cost is O(n^2 b) per sweep instead of
// the O(n^3) of a dense solve. Converged when every retained Ritz pair has
// residual below tol * lambda_max.
std::pair<Vector, Matrix> subspace_iteration(const Matrix& cov, Eigen::Index k) {
  const Eigen::Index n = cov.rows();
  const Eigen::Index b = std::min(n, k + std::max<Eigen::Index>(20, k / 2));
  constexpr double tol = 1e-11;
  constexpr int max_sweeps = 200;

  Rng rng = make_rng(0x6b6c, 0);  // fixed start block keeps the basis deterministic
  Matrix start(n, b);
  for (Eigen::Index j = 0; j < b; ++j) start.col(j) = standard_normal(rng, n);
  Matrix q = orthonormal_basis(start);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    const Matrix y = cov * q;
    const Matrix t = (q.transpose() * y + y.transpose() * q) * 0.5;
    Eigen::SelfAdjointEigenSolver<Matrix> small(t);
    const Vector theta = small.eigenvalues().reverse();
    const Matrix u = small.eigenvectors().rowwise().reverse();
    const Matrix v = q * u;
    const Matrix cv = y * u;
    const double scale = std::max(std::abs(theta(0)), std::numeric_limits<double>::min());
    const double residual = (cv.leftCols(k) - v.leftCols(k) * theta.head(k).asDiagonal()).colwise().norm().maxCoeff();
    if (residual <= tol * scale) return {theta, v};
    q = orthonormal_basis(cv);
  }
  throw NumericalError("truncated_kl: subspace iteration did not converge in " + std::to_string(max_sweeps) +
                       " sweeps");
}

}  // namespace

EigenPairs truncated_kl(const Matrix& cov, Eigen::Index n_modes) {
  const Eigen::Index n = cov.rows();
  if (cov.cols() != n) throw ConfigError("truncated_kl: matrix is not square");
  if (n_modes < 0 || n_modes > n)
    throw ConfigError("truncated_kl: n_modes must lie in [0, " + std::to_string(n) + "]");
  const double scale = n > 0 ? cov.cwiseAbs().maxCoeff() : 0.0;
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ConfigError("truncated_kl: matrix is not symmetric");

  const double trace = cov.trace();
  const double eps = 1e-8 * std::abs(trace);
  if (n == 0 || n_modes == 0) return leading(Vector(0), Matrix(n, 0), 0, trace);

  // Dense solve when the problem is small or most of the spectrum is wanted;
  // this path also sees the bottom of the spectrum and can reject indefinite input.
  if (n <= kDenseEigenLimit || 4 * n_modes >= n) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    if (es.info() != Eigen::Success) throw NumericalError("truncated_kl: dense eigensolver failed");
    if (es.eigenvalues()(0) < -eps)
      throw NumericalError("truncated_kl: eigenvalue " + std::to_string(es.eigenvalues()(0)) +
                           " is below -eps; covariance is not PSD");
    return leading(es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse(), n_modes, trace);
  }

  const auto [theta, v] = subspace_iteration(cov, n_modes);
  if (theta(n_modes - 1) < -eps)
    throw NumericalError("truncated_kl: eigenvalue " + std::to_string(theta(n_modes - 1)) +
                         " is below -eps; covariance is not PSD");
  return leading(theta, v, n_modes, trace);
}

KLBasis build_kl_basis(const Grid& grid, const CovarianceModel& model, Eigen::Index n_modes) {
  KLBasis basis;
  basis.grid = grid;
  basis.mean = Vector::Constant(grid.cells(), model.mean);
  basis.spectrum = truncated_kl(build_covariance_matrix(grid, model), n_modes);
  return basis;
}

Field sample_field(const KLBasis& basis, const Vector& xi) {
  if (xi.size() != basis.n_modes())
    throw ConfigError("sample_field: expected " + std::to_string(basis.n_modes()) +
                      " coefficients, got " + std::to_string(xi.size()));
  Vector scaled = basis.spectrum.eigenvalues.cwiseSqrt().cwiseProduct(xi);
  return Field(basis.grid, basis.mean + basis.spectrum.modes * scaled);
}

Field exp_field(const Field& u) {
  return Field(u.grid, u.values.array().exp().matrix());
}

}  // namespace dsi
