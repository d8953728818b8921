#pragma once

#include "dsi/grf.hpp"
#include "dsi/sim2d.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dsi::harness {

struct GridSpec {
  int nx{0};
  int ny{0};
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct TransformSpec {
  bool enabled{false};
  double delta_mpa{0.01};
  double after_day{80.0};  ///< prediction instants later than this are transformed
};

struct DsiSpec {
  long ensemble_size{1000};
  long n_samples{1000};
  std::vector<long> ell_sweep{10, 100, 250, 500, 1000};
  TransformSpec transform;
};

struct McmcSpec {
  int chains{4};
  long iterations{500000};
  double burn_in{0.5};
  double beta{0.1};
  long thinning{10};
  bool adapt{true};
  long n_predictive{1000};  ///< retained draws pushed through the predictive model
};

struct MapSpec {
  int max_iterations{50};
  double gradient_tolerance{1e-6};
  double fd_step{1e-4};
  std::string propagation{"linearized"};  ///< or "sampled"
  long n_samples{1000};
};

/// Everything that defines an experiment. Defaults reproduce the 2D benchmark.
/// The JSON form uses days, MPa and m^3/day; the struct holds SI values.
struct ExperimentConfig {
  GridSpec truth_grid{80, 80};
  GridSpec inversion_grid{50, 50};
  double lx{1000.0};
  double ly{1000.0};
  sim2d::FluidConfig fluid;
  CovarianceModel prior;
  int n_modes{50};
  int truth_modes{0};  ///< KL modes for the truth draw; 0 uses n_modes
  sim2d::WellSchedule schedule{sim2d::benchmark_schedule()};
  double dt{86400.0 * 4};
  double observation_spacing{86400.0 * 8};
  double observation_end{86400.0 * 80};
  double prediction_spacing{86400.0 * 4};
  double prediction_end{86400.0 * 160};
  double noise_relative_std{0.01};  ///< of the initial pressure
  double min_physical_pressure{101325.0};  ///< Pa; members below are non-physical
  DsiSpec dsi;
  McmcSpec mcmc;
  MapSpec map;
  std::uint64_t seed{0};

  /// Throws ConfigError. Identical truth and inversion grids are rejected
  /// unless `allow_inverse_crime` is set.
  void validate(bool allow_inverse_crime = false) const;

  Grid truth() const { return Grid(truth_grid.nx, truth_grid.ny, lx, ly); }
  Grid inversion() const { return Grid(inversion_grid.nx, inversion_grid.ny, lx, ly); }
  sim2d::ObservationDesign observation_design() const;
  sim2d::PredictionDesign prediction_design() const;
  double noise_std() const { return noise_relative_std * fluid.initial_pressure; }
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Applies `patch` over the defaults (JSON merge patch). Unknown keys are errors.
ExperimentConfig config_from_json(const nlohmann::json& patch);
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a of the canonical JSON form, excluding the seed.
std::uint64_t config_hash(const ExperimentConfig& config);

/// Independent seed for one stage of the pipeline (e.g. "truth", "mcmc").
std::uint64_t sub_seed(std::uint64_t master, std::string_view tag, std::uint64_t attempt = 0);

}  // namespace dsi::harness
