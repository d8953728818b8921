#include "dsi/bayes.hpp"

#include "dsi/error.hpp"
#include "dsi/parallel.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <ostream>
#include <string>

namespace dsi::bayes {

NoiseModel::NoiseModel(Matrix covariance) : covariance_(std::move(covariance)), llt_(covariance_) {
  if (covariance_.rows() != covariance_.cols()) throw ConfigError("noise covariance must be square");
  if (llt_.info() != Eigen::Success) throw ConfigError("noise covariance must be positive definite");
}

NoiseModel NoiseModel::diagonal(const Vector& std_dev) {
  return NoiseModel(Matrix(std_dev.array().square().matrix().asDiagonal()));
}

double NoiseModel::weighted_norm2(const Vector& r) const {
  return llt_.matrixL().solve(r).squaredNorm();
}

Vector NoiseModel::solve(const Vector& x) const { return llt_.solve(x); }
Matrix NoiseModel::solve(const Matrix& x) const { return llt_.solve(x); }

GaussianPrior::GaussianPrior(Eigen::Index dim)
    : GaussianPrior(Vector::Zero(dim), Matrix::Identity(dim, dim)) {}

GaussianPrior::GaussianPrior(Vector mean, Matrix covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), llt_(covariance_) {
  if (covariance_.rows() != mean_.size() || covariance_.cols() != mean_.size())
    throw ConfigError("prior mean and covariance sizes differ");
  if (llt_.info() != Eigen::Success) throw ConfigError("prior covariance must be positive definite");
}

double GaussianPrior::weighted_norm2(const Vector& x) const {
  return llt_.matrixL().solve(x - mean_).squaredNorm();
}

Matrix GaussianPrior::precision() const { return llt_.solve(Matrix::Identity(dim(), dim())); }

Vector GaussianPrior::precision_times(const Vector& x) const { return llt_.solve(x); }

std::string to_string(MapStatus s) {
  switch (s) {
    case MapStatus::converged: return "converged";
    case MapStatus::iteration_cap: return "iteration_cap";
    case MapStatus::line_search_failed: return "line_search_failed";
  }
  return "unknown";
}

double neg_log_posterior(const Vector& xi, const Vector& d_obs, const VectorModel& forward,
                         const NoiseModel& noise, const GaussianPrior& prior) {
  const Vector r = d_obs - forward(xi);
  return 0.5 * noise.weighted_norm2(r) + 0.5 * prior.weighted_norm2(xi);
}

Vector gradient(const Vector& xi, const Vector& d_obs, const Vector& f_xi, const Matrix& jacobian,
                const NoiseModel& noise, const GaussianPrior& prior) {
  return -jacobian.transpose() * noise.solve(Vector(d_obs - f_xi)) + prior.precision_times(xi - prior.mean());
}

Matrix jacobian(const VectorModel& forward, const Vector& xi, double h, unsigned workers) {
  if (!(h > 0.0)) throw ConfigError("jacobian: step must be positive");
  const Eigen::Index n = xi.size();
  std::vector<Vector> plus(static_cast<std::size_t>(n)), minus(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(2 * n), workers, [&](std::size_t task) {
    const auto j = static_cast<Eigen::Index>(task / 2);
    Vector x = xi;
    x(j) += (task % 2 == 0) ? h : -h;
    (task % 2 == 0 ? plus : minus)[static_cast<std::size_t>(j)] = forward(x);
  });
  const Eigen::Index d = n > 0 ? plus[0].size() : 0;
  Matrix jac(d, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& p = plus[static_cast<std::size_t>(j)];
    const auto& m = minus[static_cast<std::size_t>(j)];
    if (p.size() != d || m.size() != d) throw SimulationError("jacobian: inconsistent output size");
    jac.col(j) = (p - m) / (2.0 * h);
  }
  return jac;
}

namespace {

struct CgResult {
  Vector x;
  int iterations{0};
};

// Conjugate gradients on (F^T Ge^-1 F + P) x = b without forming the matrix.
CgResult gauss_newton_cg(const Matrix& jac, const NoiseModel& noise, const GaussianPrior& prior,
                         const Vector& b, double rel_tol, int max_iter) {
  auto apply = [&](const Vector& v) -> Vector {
    return jac.transpose() * noise.solve(Vector(jac * v)) + prior.precision_times(v);
  };
  CgResult out;
  out.x = Vector::Zero(b.size());
  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  const double stop = rel_tol * rel_tol * rr;
  for (int it = 0; it < max_iter && rr > stop && rr > 0.0; ++it) {
    const Vector ap = apply(p);
    const double curvature = p.dot(ap);
    if (!(curvature > 0.0)) break;
    const double alpha = rr / curvature;
    out.x += alpha * p;
    r -= alpha * ap;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    out.iterations = it + 1;
  }
  return out;
}

GaussianApproximation posterior_from_hessian(const Vector& mean, const Matrix& hessian) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(hessian));
  if (es.info() != Eigen::Success) throw NumericalError("posterior covariance: eigensolver failed");
  // Gpost = V diag(1/lambda) V^T, with eigenvalues of Gpost clamped at 1e-12.
  Vector inv = es.eigenvalues().unaryExpr([](double l) {
    return l > 0.0 ? std::max(1.0 / l, 1e-12) : 1e-12;
  });
  GaussianApproximation g;
  g.mean = mean;
  g.factor = es.eigenvectors() * inv.cwiseSqrt().asDiagonal();
  g.covariance = symmetrize(g.factor * g.factor.transpose());
  return g;
}

}  // namespace

LinearizedPosterior map_estimate(const Vector& d_obs, const VectorModel& forward,
                                 const NoiseModel& noise, const GaussianPrior& prior,
                                 const MapOptions& options, const Vector* initial) {
  if (options.max_iterations < 0) throw ConfigError("map: max_iterations must be >= 0");
  if (noise.dim() != d_obs.size()) throw ConfigError("map: noise and data sizes differ");
  const CountingModel counted(forward);
  const VectorModel model = std::cref(counted);

  auto objective = [&](const Vector& f_xi, const Vector& xi) {
    return 0.5 * noise.weighted_norm2(d_obs - f_xi) + 0.5 * prior.weighted_norm2(xi);
  };

  LinearizedPosterior post;
  Vector xi = initial ? *initial : prior.mean();
  if (xi.size() != prior.dim()) throw ConfigError("map: initial guess has wrong size");
  Vector f_xi = model(xi);
  double obj = objective(f_xi, xi);
  Matrix jac = jacobian(model, xi, options.fd_step, options.workers);
  Vector g = gradient(xi, d_obs, f_xi, jac, noise, prior);
  const double g0 = g.norm();
  post.trace.push_back({0, obj, g0, 0.0, 0, 0, counted.count()});
  post.status = MapStatus::iteration_cap;

  for (int it = 1; it <= options.max_iterations + 1; ++it) {
    const double gn = g.norm();
    if (gn <= options.gradient_tolerance * g0 || gn == 0.0) {
      post.status = MapStatus::converged;
      break;
    }
    if (it > options.max_iterations) break;

    const double forcing = std::min(options.cg_max_forcing, std::sqrt(gn / g0));
    const CgResult cg = gauss_newton_cg(jac, noise, prior, -g, forcing, static_cast<int>(xi.size()) * 2);
    const Vector& dir = cg.x;
    const double slope = g.dot(dir);

    double alpha = 1.0;
    int halvings = 0;
    bool accepted = false;
    Vector trial_x, trial_f;
    double trial_obj = 0.0;
    for (; halvings <= options.max_halvings; ++halvings, alpha *= 0.5) {
      trial_x = xi + alpha * dir;
      try {
        trial_f = model(trial_x);
      } catch (const SimulationError&) {
        continue;
      }
      trial_obj = objective(trial_f, trial_x);
      if (std::isfinite(trial_obj) && trial_obj <= obj + options.armijo * alpha * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      post.status = MapStatus::line_search_failed;
      break;
    }
    xi = trial_x;
    f_xi = trial_f;
    obj = trial_obj;
    jac = jacobian(model, xi, options.fd_step, options.workers);
    g = gradient(xi, d_obs, f_xi, jac, noise, prior);
    post.trace.push_back({it, obj, g.norm(), alpha, cg.iterations, halvings, counted.count()});
  }

  const Matrix hessian = jac.transpose() * noise.solve(jac) + prior.precision();
  const GaussianApproximation approx = posterior_from_hessian(xi, hessian);
  post.k_map = xi;
  post.covariance = approx.covariance;
  post.factor = approx.factor;
  post.jacobian = jac;
  post.solve_count = counted.count();
  return post;
}

Vector sample_gaussian(const Vector& mean, const Matrix& factor, const Vector& eta) {
  if (factor.rows() != mean.size() || factor.cols() != eta.size())
    throw ConfigError("sample_gaussian: dimension mismatch");
  return mean + factor * eta;
}

GaussianApproximation linearized_predictive(const Vector& k_map, const Matrix& posterior_covariance,
                                            const VectorModel& predictive, double h,
                                            unsigned workers) {
  if (posterior_covariance.rows() != k_map.size() || posterior_covariance.cols() != k_map.size())
    throw ConfigError("linearized_predictive: covariance size mismatch");
  const Matrix q = jacobian(predictive, k_map, h, workers);
  const SymmetricFactor post = symmetric_factor(posterior_covariance, 0.0);
  GaussianApproximation g;
  g.mean = predictive(k_map);
  g.factor = q * post.factor;
  g.covariance = symmetrize(q * posterior_covariance * q.transpose());
  return g;
}

void write_map_report(const LinearizedPosterior& post, std::ostream& out) {
  for (const auto& rec : post.trace) {
    nlohmann::json j = {{"event", "iteration"},         {"iteration", rec.iteration},
                        {"objective", rec.objective},   {"gradient_norm", rec.gradient_norm},
                        {"step_length", rec.step_length}, {"cg_iterations", rec.cg_iterations},
                        {"halvings", rec.halvings},     {"solves", rec.solves}};
    out << j.dump() << '\n';
  }
  nlohmann::json summary = {{"event", "summary"},
                            {"status", to_string(post.status)},
                            {"iterations", post.trace.empty() ? 0 : post.trace.back().iteration},
                            {"objective", post.trace.empty() ? 0.0 : post.trace.back().objective},
                            {"forward_like_solves", post.solve_count}};
  out << summary.dump() << '\n';
}

}  // namespace dsi::bayes
