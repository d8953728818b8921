#pragma once

#include "dsi/grf.hpp"

#include <Eigen/SparseCore>

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace dsi::sim2d {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct FluidConfig {
  double compressibility{2.9e-8}; ///< Pa^-1
  double viscosity{5.0e-4};       ///< Pa s
  double porosity{0.3};
  double initial_pressure{20.0e6}; ///< Pa

  void validate() const;
  double storage() const { return compressibility * porosity; }
};

/// Piecewise-constant extraction rates over [start, end), SI units.
struct RateSegment {
  double start{0.0};          ///< s
  double end{0.0};            ///< s
  std::vector<double> rates;  ///< m^3/s per well, positive = extraction
};

struct WellSchedule {
  std::vector<std::pair<double, double>> positions; ///< m
  std::vector<RateSegment> segments;
  double horizon{0.0}; ///< s

  std::size_t n_wells() const { return positions.size(); }
  /// Checks positions, that segments partition [0, horizon], and rates >= 0.
  void validate(const Grid& grid) const;
  /// Rates active at time t (the segment with start <= t < end).
  const std::vector<double>& rates_at(double t) const;
};

/// Well indices and sample instants (s). Output order is well-major, time-minor.
struct SamplingDesign {
  std::vector<int> wells;
  std::vector<double> times;

  std::size_t size() const { return wells.size() * times.size(); }
};
using ObservationDesign = SamplingDesign;
using PredictionDesign = SamplingDesign;

enum class SimulationStatus { ok, failed };

struct PressureHistory {
  Grid grid;
  std::vector<double> times;  ///< s, strictly increasing from 0
  std::vector<Field> states;  ///< Pa
  std::vector<Eigen::Index> well_cells;
  SimulationStatus status{SimulationStatus::ok};
  std::string failure;  ///< reason when status is failed

  bool ok() const { return status == SimulationStatus::ok; }
};

/// Discrete flow operator for storage * M dp/dt = (1/mu) L p + M s, where L is the
/// transmissibility Laplacian (m^3, harmonic face averages, no-flux boundary)
/// and M holds cell volumes under unit thickness.
struct FlowOperator {
  Grid grid;
  FluidConfig fluid;
  SparseMatrix transmissibility;
  Vector cell_volume;
};

/// Unit out-of-plane thickness (m).
inline constexpr double kThickness = 1.0;

FlowOperator assemble_operator(const Grid& grid, const Field& perm, const FluidConfig& fluid);

/// Backward Euler stepper for a fixed operator and dt; factorises once.
class ImplicitStepper {
public:
  ImplicitStepper(const FlowOperator& op, double dt);
  ~ImplicitStepper();
  ImplicitStepper(ImplicitStepper&&) noexcept;
  ImplicitStepper& operator=(ImplicitStepper&&) noexcept;

  /// One step on a pressure deviation u = p - p_ref. `sources` is a volumetric
  /// source density (s^-1). Throws NumericalError when the relative residual
  /// exceeds 1e-10.
  Vector advance_deviation(const Vector& u_prev, const Vector& sources) const;

  double dt() const { return dt_; }

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  double dt_;
};

/// Solves (storage/dt M - L/mu) p_new = storage/dt M p_prev + M s.
Field step(const Field& p_prev, double dt, const FlowOperator& op, const Field& sources);

/// Source density field (s^-1) for the given per-well rates; extraction is negative.
Vector well_sources(const Grid& grid, const std::vector<Eigen::Index>& well_cells,
                    const std::vector<double>& rates);

/// Time-steps from the initial pressure over [0, horizon]. Non-finite states
/// and solver failures are reported through the status, not thrown.
PressureHistory simulate(const Field& perm, const WellSchedule& schedule, const FluidConfig& fluid,
                         double dt);

/// Well-cell pressures at the design instants, well-major.
Vector observe(const PressureHistory& history, const ObservationDesign& design);
Vector predict(const PressureHistory& history, const PredictionDesign& design);

/// Nine wells on a 3x3 lattice with the alternating 50/0/25 m^3/day schedule over 160 days.
WellSchedule benchmark_schedule(double lx = 1000.0, double ly = 1000.0);
/// Every 8 days over the first 80 days at all nine wells (90 values).
ObservationDesign benchmark_observation_design();
/// Every 4 days over the full 160 days at all nine wells (360 values).
PredictionDesign benchmark_prediction_design();
/// All wells at multiples of spacing in (start, end].
SamplingDesign regular_design(std::size_t n_wells, double spacing, double start, double end);

}  // namespace dsi::sim2d
