#pragma once

#include "dsi/ensemble.hpp"
#include "dsi/harness/config.hpp"
#include "dsi/io.hpp"

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace dsi::harness {

/// Forward and predictive models on the inversion grid, in KL coordinates.
/// Copies share the simulation counter.
class Problem {
public:
  explicit Problem(ExperimentConfig config);
  Problem(ExperimentConfig config, KLBasis basis);

  const ExperimentConfig& config() const { return config_; }
  const KLBasis& basis() const { return *basis_; }
  Eigen::Index dim() const { return basis_->n_modes(); }

  /// Observations; simulates only up to the last observation instant.
  /// Throws SimulationError on failure.
  Vector forward(const Vector& xi) const;
  /// Predictions over the prediction design.
  Vector predictive(const Vector& xi) const;
  /// One full simulation; flags non-physical pressures.
  MemberOutput member(const Vector& xi) const;

  Matrix noise_covariance() const;
  long simulations() const { return counter_->load(); }

private:
  sim2d::PressureHistory run(const Vector& xi, double horizon) const;

  ExperimentConfig config_;
  std::shared_ptr<const KLBasis> basis_;
  sim2d::WellSchedule observation_schedule_;
  sim2d::ObservationDesign obs_design_;
  sim2d::PredictionDesign pred_design_;
  std::shared_ptr<std::atomic<long>> counter_;
};

/// First `horizon` seconds of a schedule.
sim2d::WellSchedule truncate_schedule(const sim2d::WellSchedule& s, double horizon);

struct Truth {
  Field log_permeability;  ///< truth grid
  Vector xi;               ///< KL coefficients on the truth grid
  Vector clean_observations;
  Vector clean_predictions;
  Vector observations;     ///< clean + noise
  int attempts{1};         ///< draws needed for a successful simulation
};

/// Prior draw on the truth grid, simulated there, plus observation noise.
Truth generate_truth(const ExperimentConfig& config);

/// Writes truth_field.bin, truth_observations.bin, truth_predictions.bin,
/// observations.bin and CSV copies.
void write_truth(const std::filesystem::path& dir, const Truth& truth, const ExperimentConfig& config,
                 const io::Provenance& prov);
/// Reads the noisy observations written by write_truth.
Vector read_observations(const std::filesystem::path& dir, io::Provenance* prov = nullptr);
Vector read_truth_predictions(const std::filesystem::path& dir, io::Provenance* prov = nullptr);

/// Prediction samples from one method plus a JSON report fragment.
struct MethodResult {
  std::string name;
  Matrix samples;  ///< n_samples x m, Pa
  nlohmann::json report;
};

Ensemble prior_ensemble(const Problem& problem, Eigen::Index size, unsigned workers = 0);
/// Successful prior members' predictions, at most `count` of them.
MethodResult prior_predictive(const Ensemble& ensemble, Eigen::Index count);

/// DSI using the first `ell` members of the ensemble.
MethodResult run_dsi(const Problem& problem, const Ensemble& ensemble, Eigen::Index ell, const Vector& d_obs,
                     const std::string& name = "dsi");
/// One DSI result per entry of the configured sweep, on nested subsets.
std::vector<MethodResult> sweep_ell(const Problem& problem, const Ensemble& ensemble, const Vector& d_obs);
MethodResult run_mcmc(const Problem& problem, const Vector& d_obs, unsigned workers = 0);
MethodResult run_map(const Problem& problem, const Vector& d_obs, unsigned workers = 0);

/// samples_<name>.bin and report_<name>.json.
void write_method(const std::filesystem::path& dir, const MethodResult& result, const io::Provenance& prov);

}  // namespace dsi::harness
