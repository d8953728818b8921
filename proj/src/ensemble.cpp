#include "dsi/ensemble.hpp"

#include "dsi/error.hpp"
#include "dsi/parallel.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dsi {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

Eigen::Index Ensemble::n_ok() const {
  return static_cast<Eigen::Index>(std::count(status.begin(), status.end(), MemberStatus::ok));
}

Ensemble Ensemble::head(Eigen::Index count) const {
  if (count < 0 || count > size()) throw ConfigError("ensemble: cannot take " + std::to_string(count) + " members");
  Ensemble out;
  out.params = params.topRows(count);
  out.data = data.topRows(count);
  out.predictions = predictions.topRows(count);
  out.status.assign(status.begin(), status.begin() + count);
  return out;
}

Ensemble Ensemble::successes() const {
  const Eigen::Index k = n_ok();
  Ensemble out;
  out.params.resize(k, params.cols());
  out.data.resize(k, data.cols());
  out.predictions.resize(k, predictions.cols());
  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < size(); ++i) {
    if (status[static_cast<std::size_t>(i)] != MemberStatus::ok) continue;
    out.params.row(row) = params.row(i);
    out.data.row(row) = data.row(i);
    out.predictions.row(row) = predictions.row(i);
    ++row;
  }
  out.status.assign(static_cast<std::size_t>(k), MemberStatus::ok);
  return out;
}

void Ensemble::validate() const {
  const Eigen::Index l = size();
  if (params.rows() != l || data.rows() != l || predictions.rows() != l)
    throw ConfigError("ensemble: blocks and status list disagree on the member count");
  for (Eigen::Index i = 0; i < l; ++i) {
    if (status[static_cast<std::size_t>(i)] != MemberStatus::ok) continue;
    if (!data.row(i).allFinite() || !predictions.row(i).allFinite())
      throw ConfigError("ensemble: member " + std::to_string(i) + " is marked ok but has non-finite values");
  }
}

Ensemble build_ensemble(const PriorSampler& prior, const EnsembleModel& model, Eigen::Index count,
                        std::uint64_t seed, unsigned workers) {
  if (count < 2) throw ConfigError("ensemble: need at least two members");
  const auto l = static_cast<std::size_t>(count);
  std::vector<Vector> ks(l);
  std::vector<MemberOutput> outs(l);
  parallel_for(l, workers, [&](std::size_t i) {
    Rng rng = make_rng(seed, i);
    ks[i] = prior(rng);
    try {
      outs[i] = model(ks[i]);
      if (!outs[i].data.allFinite() || !outs[i].prediction.allFinite()) outs[i].status = MemberStatus::failed;
    } catch (const SimulationError&) {
      outs[i].status = MemberStatus::failed;
    }
  });

  Eigen::Index d = -1, m = -1;
  for (const auto& o : outs) {
    if (o.status != MemberStatus::ok) continue;
    if (d < 0) {
      d = o.data.size();
      m = o.prediction.size();
    } else if (o.data.size() != d || o.prediction.size() != m) {
      throw SimulationError("ensemble: members disagree on data or prediction length");
    }
  }
  Ensemble ens;
  const Eigen::Index n = ks.front().size();
  ens.params.resize(count, n);
  ens.data = Matrix::Constant(count, std::max<Eigen::Index>(d, 0), kNaN);
  ens.predictions = Matrix::Constant(count, std::max<Eigen::Index>(m, 0), kNaN);
  for (std::size_t i = 0; i < l; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    ens.params.row(row) = ks[i].transpose();
    ens.status.push_back(outs[i].status);
    if (outs[i].data.size() == d && outs[i].prediction.size() == m && outs[i].data.allFinite() &&
        outs[i].prediction.allFinite()) {
      ens.data.row(row) = outs[i].data.transpose();
      ens.predictions.row(row) = outs[i].prediction.transpose();
    }
  }
  if (ens.n_ok() < 2)
    throw SimulationError("ensemble: only " + std::to_string(ens.n_ok()) + " of " + std::to_string(count) +
                          " simulations succeeded");
  return ens;
}

Ensemble build_ensemble(const PriorSampler& prior, const VectorModel& forward, const VectorModel& predictive,
                        Eigen::Index count, std::uint64_t seed, unsigned workers) {
  EnsembleModel joint = [&](const Vector& k) { return MemberOutput{forward(k), predictive(k), MemberStatus::ok}; };
  return build_ensemble(prior, joint, count, seed, workers);
}

JointMoments ensemble_moments(const Ensemble& ens) {
  ens.validate();
  const Ensemble ok = ens.successes();
  const Eigen::Index l = ok.size();
  if (l < 2) throw SimulationError("moments: need at least two successful members, have " + std::to_string(l));
  const Eigen::Index d = ok.data.cols();
  const Eigen::Index m = ok.predictions.cols();

  Matrix joint(l, d + m);
  joint << ok.data, ok.predictions;
  Vector mean(d + m);
  std::vector<double> column(static_cast<std::size_t>(l));
  for (Eigen::Index j = 0; j < d + m; ++j) {
    for (Eigen::Index i = 0; i < l; ++i) column[static_cast<std::size_t>(i)] = joint(i, j);
    mean(j) = stats::compensated_sum(column) / static_cast<double>(l);
  }
  const Matrix centred = joint.rowwise() - mean.transpose();
  const Matrix cov = centred.transpose() * centred / static_cast<double>(l - 1);

  JointMoments mom;
  mom.count = l;
  mom.d0 = mean.head(d);
  mom.p0 = mean.tail(m);
  mom.gamma_d = symmetrize(cov.topLeftCorner(d, d));
  mom.gamma_p = symmetrize(cov.bottomRightCorner(m, m));
  mom.gamma_pd = cov.bottomLeftCorner(m, d);
  return mom;
}

GaussianConditional condition(const JointMoments& mom, const Vector& d_obs, const Matrix& gamma_e) {
  const Eigen::Index d = mom.d0.size();
  if (d_obs.size() != d) throw ConfigError("condition: observed data has the wrong length");
  if (gamma_e.rows() != d || gamma_e.cols() != d) throw ConfigError("condition: noise covariance has the wrong size");
  const Eigen::LLT<Matrix> llt(symmetrize(mom.gamma_d + gamma_e));
  if (llt.info() != Eigen::Success)
    throw NumericalError("condition: G_d + G_e is not positive definite; check the noise covariance");

  GaussianConditional out;
  const Vector innovation = d_obs - mom.d0;
  out.mean = mom.p0 + mom.gamma_pd * llt.solve(innovation);
  const Matrix gain_t = llt.solve(mom.gamma_dp());  // (G_d + G_e)^-1 G_dp
  const Matrix cov = symmetrize(mom.gamma_p - mom.gamma_pd * gain_t);
  const Eigen::Index m = cov.rows();
  const double floor = m > 0 ? std::max(0.0, 1e-12 * cov.trace() / static_cast<double>(m)) : 0.0;
  const SymmetricFactor f = symmetric_factor(cov, floor);
  out.covariance = f.repaired;
  out.factor = f.factor;
  out.clamped = f.clamped;
  return out;
}

Vector sample_conditional(const GaussianConditional& cond, const Vector& xi) {
  if (xi.size() != cond.factor.cols()) throw ConfigError("sample_conditional: xi has the wrong length");
  return cond.mean + cond.factor * xi;
}

Matrix sample_conditional(const GaussianConditional& cond, Eigen::Index count, Rng& rng) {
  Matrix out(count, cond.mean.size());
  for (Eigen::Index i = 0; i < count; ++i)
    out.row(i) = sample_conditional(cond, standard_normal(rng, cond.factor.cols())).transpose();
  return out;
}

Ensemble apply_transform(const Ensemble& ens, const Transform* data_transform,
                         const Transform* prediction_transform) {
  Ensemble out = ens;
  for (Eigen::Index i = 0; i < ens.size(); ++i) {
    if (ens.status[static_cast<std::size_t>(i)] != MemberStatus::ok) continue;
    try {
      if (data_transform) out.data.row(i) = data_transform->forward(ens.data.row(i).transpose()).transpose();
      if (prediction_transform)
        out.predictions.row(i) = prediction_transform->forward(ens.predictions.row(i).transpose()).transpose();
    } catch (const TransformDomainError& e) {
      throw ConfigError("transform undefined for ensemble member " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

DsiResult dsi_pipeline(const Ensemble& ens, const Vector& d_obs, const Matrix& gamma_e, const DsiOptions& options) {
  if (options.n_samples < 0) throw ConfigError("dsi: n_samples must be >= 0");
  const Transform* dt = options.data_transform.get();
  const Transform* pt = options.prediction_transform.get();
  const Ensemble work = (dt || pt) ? apply_transform(ens, dt, pt) : ens;
  Vector d = d_obs;
  if (dt) {
    try {
      d = dt->forward(d_obs);
    } catch (const TransformDomainError& e) {
      throw ConfigError(std::string("transform undefined for the observed data: ") + e.what());
    }
  }

  DsiResult out;
  out.moments = ensemble_moments(work);
  out.used = out.moments.count;
  out.discarded = ens.size() - out.used;
  out.conditional = condition(out.moments, d, gamma_e);
  Rng rng = make_rng(options.seed, 0);
  out.samples = sample_conditional(out.conditional, options.n_samples, rng);
  if (pt)
    for (Eigen::Index i = 0; i < out.samples.rows(); ++i)
      out.samples.row(i) = pt->inverse(out.samples.row(i).transpose()).transpose();
  return out;
}

}  // namespace dsi
