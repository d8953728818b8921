#pragma once

#include "dsi/linalg.hpp"
#include "dsi/model.hpp"
#include "dsi/stats.hpp"
#include "dsi/transform.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace dsi {

enum class MemberStatus : std::uint8_t { ok = 0, failed = 1, non_physical = 2 };

/// Aligned (parameter, data, prediction) triples. Rows of failed members hold NaN.
struct Ensemble {
  Matrix params;       ///< l x n
  Matrix data;         ///< l x d
  Matrix predictions;  ///< l x m
  std::vector<MemberStatus> status;

  Eigen::Index size() const { return static_cast<Eigen::Index>(status.size()); }
  Eigen::Index n_ok() const;
  /// The first `count` members.
  Ensemble head(Eigen::Index count) const;
  /// Successful members only.
  Ensemble successes() const;
  void validate() const;
};

struct MemberOutput {
  Vector data;
  Vector prediction;
  MemberStatus status{MemberStatus::ok};
};

/// Runs one prior sample through the forward and predictive models. Throwing
/// SimulationError marks the member as failed.
using EnsembleModel = std::function<MemberOutput(const Vector&)>;
using PriorSampler = std::function<Vector(Rng&)>;

/// Draws `count` prior samples (member i uses stream i of `seed`) and simulates
/// them in parallel. Throws SimulationError when fewer than two succeed.
Ensemble build_ensemble(const PriorSampler& prior, const EnsembleModel& model, Eigen::Index count,
                        std::uint64_t seed, unsigned workers = 0);
Ensemble build_ensemble(const PriorSampler& prior, const VectorModel& forward, const VectorModel& predictive,
                        Eigen::Index count, std::uint64_t seed, unsigned workers = 0);

/// Sample means and the blocks of the unbiased joint sample covariance.
struct JointMoments {
  Vector d0;
  Vector p0;
  Matrix gamma_d;
  Matrix gamma_p;
  Matrix gamma_pd;
  Eigen::Index count{0};  ///< successful members used

  Matrix gamma_dp() const { return gamma_pd.transpose(); }
};

/// Moments over successful members only; needs at least two.
JointMoments ensemble_moments(const Ensemble& ens);

struct GaussianConditional {
  Vector mean;
  Matrix covariance;
  Matrix factor;          ///< factor * factor^T == covariance (after PSD repair)
  Eigen::Index clamped{0};
};

/// Conditions the prediction block on d_obs under data noise gamma_e:
/// mean = p0 + G_pd (G_d + G_e)^-1 (d_obs - d0), cov = G_p - G_pd (G_d + G_e)^-1 G_dp.
GaussianConditional condition(const JointMoments& mom, const Vector& d_obs, const Matrix& gamma_e);

/// mean + factor * xi
Vector sample_conditional(const GaussianConditional& cond, const Vector& xi);
/// `count` draws as rows.
Matrix sample_conditional(const GaussianConditional& cond, Eigen::Index count, Rng& rng);

/// Copy of the ensemble with the transforms applied to every successful
/// member. Throws ConfigError naming the first member outside a domain.
Ensemble apply_transform(const Ensemble& ens, const Transform* data_transform,
                         const Transform* prediction_transform);

struct DsiOptions {
  std::shared_ptr<const Transform> data_transform;
  std::shared_ptr<const Transform> prediction_transform;
  Eigen::Index n_samples{1000};
  std::uint64_t seed{0};
};

struct DsiResult {
  Matrix samples;                   ///< n_samples x m in original units
  GaussianConditional conditional;  ///< in transformed coordinates
  JointMoments moments;             ///< in transformed coordinates
  Eigen::Index used{0};
  Eigen::Index discarded{0};
};

/// Moments, optional transforms, conditioning, sampling and inverse transform.
/// No simulations happen here.
DsiResult dsi_pipeline(const Ensemble& ens, const Vector& d_obs, const Matrix& gamma_e,
                       const DsiOptions& options);

}  // namespace dsi
