#pragma once

#include "dsi/linalg.hpp"
#include "dsi/model.hpp"

#include <Eigen/Cholesky>

#include <iosfwd>
#include <string>
#include <vector>

namespace dsi::bayes {

/// Additive Gaussian noise N(0, covariance).
class NoiseModel {
public:
  explicit NoiseModel(Matrix covariance);
  static NoiseModel diagonal(const Vector& std_dev);

  const Matrix& covariance() const { return covariance_; }
  Eigen::Index dim() const { return covariance_.rows(); }
  /// ||r||^2 weighted by the inverse covariance.
  double weighted_norm2(const Vector& r) const;
  /// covariance^{-1} x
  Vector solve(const Vector& x) const;
  Matrix solve(const Matrix& x) const;
  /// Lower Cholesky factor of the covariance.
  Matrix factor() const { return llt_.matrixL(); }

private:
  Matrix covariance_;
  Eigen::LLT<Matrix> llt_;
};

/// Gaussian prior on the parameters; the standard normal in KL coordinates.
class GaussianPrior {
public:
  explicit GaussianPrior(Eigen::Index dim);
  GaussianPrior(Vector mean, Matrix covariance);

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  Eigen::Index dim() const { return mean_.size(); }
  double weighted_norm2(const Vector& x) const;  ///< ||x - mean||^2 weighted by the precision
  Matrix precision() const;
  Vector precision_times(const Vector& x) const;

private:
  Vector mean_;
  Matrix covariance_;
  Eigen::LLT<Matrix> llt_;
};

struct GaussianApproximation {
  Vector mean;
  Matrix covariance;
  Matrix factor;  ///< factor * factor^T == covariance
};

enum class MapStatus { converged, iteration_cap, line_search_failed };
std::string to_string(MapStatus s);

struct MapIteration {
  int iteration{0};
  double objective{0.0};
  double gradient_norm{0.0};
  double step_length{0.0};
  int cg_iterations{0};
  int halvings{0};
  long solves{0};  ///< cumulative forward-like solves
};

struct LinearizedPosterior {
  Vector k_map;
  Matrix covariance;  ///< (F^T Ge^-1 F + Gk^-1)^-1
  Matrix factor;
  Matrix jacobian;    ///< F at k_map
  MapStatus status{MapStatus::converged};
  std::vector<MapIteration> trace;
  long solve_count{0};

  GaussianApproximation gaussian() const { return {k_map, covariance, factor}; }
};

struct MapOptions {
  int max_iterations{50};
  double gradient_tolerance{1e-6};  ///< on ||g|| / ||g_0||
  double fd_step{1e-4};
  int max_halvings{20};
  double armijo{1e-4};
  double cg_max_forcing{0.5};
  unsigned workers{0};
};

/// 1/2 ||d_obs - f(xi)||^2_{Ge^-1} + 1/2 ||xi - k0||^2_{Gk^-1}.
double neg_log_posterior(const Vector& xi, const Vector& d_obs, const VectorModel& forward,
                         const NoiseModel& noise, const GaussianPrior& prior);

/// Gradient of neg_log_posterior for a given Jacobian of the forward model.
Vector gradient(const Vector& xi, const Vector& d_obs, const Vector& f_xi, const Matrix& jacobian,
                const NoiseModel& noise, const GaussianPrior& prior);

/// Central differences, column j = (f(xi + h e_j) - f(xi - h e_j)) / (2h).
/// Stencil points run in parallel.
Matrix jacobian(const VectorModel& forward, const Vector& xi, double h = 1e-4, unsigned workers = 0);

/// Inexact Gauss-Newton with matrix-free CG inner solves and Armijo
/// backtracking, followed by the linearised posterior covariance at the optimum.
LinearizedPosterior map_estimate(const Vector& d_obs, const VectorModel& forward,
                                 const NoiseModel& noise, const GaussianPrior& prior,
                                 const MapOptions& options = {}, const Vector* initial = nullptr);

/// mean + factor * eta
Vector sample_gaussian(const Vector& mean, const Matrix& factor, const Vector& eta);

/// Gaussian predictive N(q(k_map), Q Gpost Q^T) with Q by central differences.
GaussianApproximation linearized_predictive(const Vector& k_map, const Matrix& posterior_covariance,
                                            const VectorModel& predictive, double h = 1e-4,
                                            unsigned workers = 0);

/// One JSON object per line: an iteration record per trace entry, then a summary.
void write_map_report(const LinearizedPosterior& post, std::ostream& out);

}  // namespace dsi::bayes
