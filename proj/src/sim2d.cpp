#include "dsi/sim2d.hpp"

#include "dsi/error.hpp"
#include "dsi/units.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <string>

namespace dsi::sim2d {

namespace {

constexpr double kResidualTolerance = 1e-10;

bool near(double a, double b, double scale) { return std::abs(a - b) <= 1e-9 * scale; }

std::size_t find_time(const PressureHistory& history, double t) {
  const double scale = std::max(1.0, history.times.back());
  // Instants are regularly spaced in practice; a binary search keeps this general.
  auto it = std::lower_bound(history.times.begin(), history.times.end(), t - 1e-9 * scale);
  if (it == history.times.end() || !near(*it, t, scale))
    throw ConfigError("design time " + std::to_string(units::to_days(t)) +
                      " days is not a solver output instant");
  return static_cast<std::size_t>(it - history.times.begin());
}

}  // namespace

void FluidConfig::validate() const {
  if (!(compressibility > 0.0 && viscosity > 0.0 && porosity > 0.0 && initial_pressure > 0.0))
    throw ConfigError("fluid: compressibility, viscosity, porosity and initial pressure must be positive");
}

void WellSchedule::validate(const Grid& grid) const {
  if (!(horizon > 0.0)) throw ConfigError("schedule: horizon must be positive");
  for (const auto& [x, y] : positions) grid.containing_cell(x, y);
  if (segments.empty()) throw ConfigError("schedule: no rate segments");
  const double scale = horizon;
  if (!near(segments.front().start, 0.0, scale)) throw ConfigError("schedule: first segment must start at 0");
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    if (!(seg.end > seg.start)) throw ConfigError("schedule: empty segment " + std::to_string(s));
    if (s > 0 && !near(seg.start, segments[s - 1].end, scale))
      throw ConfigError("schedule: segments " + std::to_string(s - 1) + " and " + std::to_string(s) +
                        " are not contiguous");
    if (seg.rates.size() != positions.size())
      throw ConfigError("schedule: segment " + std::to_string(s) + " has " +
                        std::to_string(seg.rates.size()) + " rates for " +
                        std::to_string(positions.size()) + " wells");
    for (double r : seg.rates)
      if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("schedule: rates must be finite and >= 0");
  }
  if (!near(segments.back().end, horizon, scale)) throw ConfigError("schedule: segments must end at the horizon");
}

const std::vector<double>& WellSchedule::rates_at(double t) const {
  for (const auto& seg : segments)
    if (t >= seg.start && t < seg.end) return seg.rates;
  return segments.back().rates;
}

FlowOperator assemble_operator(const Grid& grid, const Field& perm, const FluidConfig& fluid) {
  fluid.validate();
  if (perm.values.size() != grid.cells()) throw ConfigError("assemble_operator: permeability size mismatch");
  if (!(perm.values.minCoeff() > 0.0)) throw ConfigError("assemble_operator: permeability must be positive");

  const int nx = grid.nx();
  const int ny = grid.ny();
  const double tx = grid.dy() * kThickness / grid.dx();  // face area / centre distance, x faces
  const double ty = grid.dx() * kThickness / grid.dy();
  const auto& k = perm.values;

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(grid.cells()) * 5);
  Vector diagonal = Vector::Zero(grid.cells());
  auto connect = [&](Eigen::Index a, Eigen::Index b, double geometric) {
    const double t = geometric * 2.0 * k(a) * k(b) / (k(a) + k(b));
    triplets.emplace_back(a, b, t);
    triplets.emplace_back(b, a, t);
    diagonal(a) -= t;
    diagonal(b) -= t;
  };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const auto c = grid.index(i, j);
      if (i + 1 < nx) connect(c, grid.index(i + 1, j), tx);
      if (j + 1 < ny) connect(c, grid.index(i, j + 1), ty);
    }
  for (Eigen::Index c = 0; c < grid.cells(); ++c) triplets.emplace_back(c, c, diagonal(c));

  FlowOperator op;
  op.grid = grid;
  op.fluid = fluid;
  op.transmissibility.resize(grid.cells(), grid.cells());
  op.transmissibility.setFromTriplets(triplets.begin(), triplets.end());
  op.cell_volume = Vector::Constant(grid.cells(), grid.cell_area() * kThickness);
  return op;
}

struct ImplicitStepper::Impl {
  SparseMatrix system;
  Vector storage_diag;  // storage * volume / dt
  Vector volume;
  Eigen::SimplicialLDLT<SparseMatrix> solver;
};

ImplicitStepper::ImplicitStepper(const FlowOperator& op, double dt) : impl_(std::make_unique<Impl>()), dt_(dt) {
  if (!(dt > 0.0)) throw ConfigError("step: dt must be positive");
  impl_->volume = op.cell_volume;
  impl_->storage_diag = op.cell_volume * (op.fluid.storage() / dt);
  impl_->system = op.transmissibility * (-1.0 / op.fluid.viscosity);
  for (Eigen::Index c = 0; c < impl_->system.rows(); ++c) impl_->system.coeffRef(c, c) += impl_->storage_diag(c);
  impl_->solver.compute(impl_->system);
  if (impl_->solver.info() != Eigen::Success) throw NumericalError("step: factorisation failed");
}

ImplicitStepper::~ImplicitStepper() = default;
ImplicitStepper::ImplicitStepper(ImplicitStepper&&) noexcept = default;
ImplicitStepper& ImplicitStepper::operator=(ImplicitStepper&&) noexcept = default;

Vector ImplicitStepper::advance_deviation(const Vector& u_prev, const Vector& sources) const {
  const Vector rhs = impl_->storage_diag.cwiseProduct(u_prev) + impl_->volume.cwiseProduct(sources);
  Vector u = impl_->solver.solve(rhs);
  if (impl_->solver.info() != Eigen::Success) throw NumericalError("step: solve failed");
  const double rhs_norm = rhs.norm();
  double residual = 0.0;
  // Iterative refinement recovers accuracy lost to ill-conditioning.
  for (int sweep = 0; sweep <= 3; ++sweep) {
    const Vector r = rhs - impl_->system * u;
    residual = r.norm();
    if (residual <= kResidualTolerance * rhs_norm) break;
    u += impl_->solver.solve(r);
  }
  if (residual > kResidualTolerance * rhs_norm)
    throw NumericalError("step: relative residual " + std::to_string(residual / rhs_norm) +
                         " exceeds tolerance");
  return u;
}

Field step(const Field& p_prev, double dt, const FlowOperator& op, const Field& sources) {
  if (p_prev.values.size() != op.grid.cells() || sources.values.size() != op.grid.cells())
    throw ConfigError("step: field size mismatch");
  const ImplicitStepper stepper(op, dt);
  // L annihilates constants, so working on the deviation from the mean is exact.
  const double ref = p_prev.values.mean();
  const Vector u = stepper.advance_deviation(p_prev.values.array() - ref, sources.values);
  return Field(op.grid, u.array() + ref);
}

Vector well_sources(const Grid& grid, const std::vector<Eigen::Index>& well_cells,
                    const std::vector<double>& rates) {
  Vector s = Vector::Zero(grid.cells());
  const double volume = grid.cell_area() * kThickness;
  for (std::size_t w = 0; w < well_cells.size(); ++w) s(well_cells[w]) -= rates[w] / volume;
  return s;
}

PressureHistory simulate(const Field& perm, const WellSchedule& schedule, const FluidConfig& fluid,
                         double dt) {
  const Grid& grid = perm.grid;
  fluid.validate();
  schedule.validate(grid);
  if (!(dt > 0.0)) throw ConfigError("simulate: dt must be positive");
  const double steps_real = schedule.horizon / dt;
  const auto n_steps = static_cast<long>(std::llround(steps_real));
  if (n_steps < 1 || std::abs(steps_real - static_cast<double>(n_steps)) > 1e-9 * steps_real)
    throw ConfigError("simulate: dt must divide the horizon");
  for (const auto& seg : schedule.segments) {
    const double k = seg.start / dt;
    if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k))
      throw ConfigError("simulate: dt must divide every schedule segment");
  }

  PressureHistory history;
  history.grid = grid;
  for (const auto& [x, y] : schedule.positions) history.well_cells.push_back(grid.containing_cell(x, y));
  history.times.reserve(static_cast<std::size_t>(n_steps) + 1);
  history.states.reserve(static_cast<std::size_t>(n_steps) + 1);
  history.times.push_back(0.0);
  history.states.push_back(Field::constant(grid, fluid.initial_pressure));

  try {
    const FlowOperator op = assemble_operator(grid, perm, fluid);
    const ImplicitStepper stepper(op, dt);
    Vector u = Vector::Zero(grid.cells());
    const std::vector<double>* active = nullptr;
    Vector sources;
    for (long n = 0; n < n_steps; ++n) {
      const double t0 = static_cast<double>(n) * dt;
      const auto& rates = schedule.rates_at(t0 + 0.5 * dt);
      if (&rates != active) {
        active = &rates;
        sources = well_sources(grid, history.well_cells, rates);
      }
      u = stepper.advance_deviation(u, sources);
      if (!u.allFinite()) {
        history.status = SimulationStatus::failed;
        history.failure = "non-finite pressure at step " + std::to_string(n + 1);
        return history;
      }
      history.times.push_back(static_cast<double>(n + 1) * dt);
      history.states.emplace_back(grid, u.array() + fluid.initial_pressure);
    }
  } catch (const NumericalError& e) {
    history.status = SimulationStatus::failed;
    history.failure = e.what();
  } catch (const SimulationError& e) {
    history.status = SimulationStatus::failed;
    history.failure = e.what();
  }
  return history;
}

Vector observe(const PressureHistory& history, const ObservationDesign& design) {
  if (!history.ok()) throw SimulationError("observe: simulation failed: " + history.failure);
  Vector out(static_cast<Eigen::Index>(design.size()));
  std::vector<std::size_t> slots;
  slots.reserve(design.times.size());
  for (double t : design.times) slots.push_back(find_time(history, t));
  Eigen::Index k = 0;
  for (int w : design.wells) {
    if (w < 0 || static_cast<std::size_t>(w) >= history.well_cells.size())
      throw ConfigError("design references well " + std::to_string(w) + " which does not exist");
    const auto cell = history.well_cells[static_cast<std::size_t>(w)];
    for (std::size_t s : slots) out(k++) = history.states[s].values(cell);
  }
  return out;
}

Vector predict(const PressureHistory& history, const PredictionDesign& design) {
  return observe(history, design);
}

WellSchedule benchmark_schedule(double lx, double ly) {
  WellSchedule s;
  // Wells 1..9 numbered row by row from the lower-left corner.
  for (double fy : {0.25, 0.5, 0.75})
    for (double fx : {0.25, 0.5, 0.75}) s.positions.emplace_back(fx * lx, fy * ly);
  s.horizon = units::days(160.0);
  const double full = units::per_day(50.0);
  const double half = units::per_day(25.0);
  std::vector<double> odd(9), even(9);
  for (std::size_t w = 0; w < 9; ++w) {
    // Index 0 is well 1, which is odd-numbered.
    odd[w] = (w % 2 == 0) ? full : 0.0;
    even[w] = (w % 2 == 0) ? 0.0 : full;
  }
  s.segments.push_back({units::days(0.0), units::days(40.0), odd});
  s.segments.push_back({units::days(40.0), units::days(80.0), even});
  s.segments.push_back({units::days(80.0), units::days(120.0), std::vector<double>(9, 0.0)});
  s.segments.push_back({units::days(120.0), units::days(160.0), std::vector<double>(9, half)});
  return s;
}

SamplingDesign regular_design(std::size_t n_wells, double spacing, double start, double end) {
  SamplingDesign d;
  for (std::size_t w = 0; w < n_wells; ++w) d.wells.push_back(static_cast<int>(w));
  const auto count = static_cast<long>(std::llround((end - start) / spacing));
  for (long k = 1; k <= count; ++k) d.times.push_back(start + static_cast<double>(k) * spacing);
  return d;
}

ObservationDesign benchmark_observation_design() {
  return regular_design(9, units::days(8.0), 0.0, units::days(80.0));
}

PredictionDesign benchmark_prediction_design() {
  return regular_design(9, units::days(4.0), 0.0, units::days(160.0));
}

}  // namespace dsi::sim2d
