#include "dsi/harness/config.hpp"

#include "dsi/error.hpp"
#include "dsi/mcmc.hpp"
#include "dsi/units.hpp"

#include <fstream>
#include <sstream>

namespace dsi::harness {

using nlohmann::json;

namespace {

void check_known_keys(const json& patch, const json& reference, const std::string& path) {
  if (!patch.is_object() || !reference.is_object()) return;
  for (const auto& [key, value] : patch.items()) {
    if (!reference.contains(key)) throw ConfigError("unknown configuration key '" + path + key + "'");
    check_known_keys(value, reference.at(key), path + key + ".");
  }
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

sim2d::SamplingDesign design(const ExperimentConfig& c, double spacing, double end) {
  return sim2d::regular_design(c.schedule.n_wells(), spacing, 0.0, end);
}

}  // namespace

sim2d::ObservationDesign ExperimentConfig::observation_design() const {
  return design(*this, observation_spacing, observation_end);
}

sim2d::PredictionDesign ExperimentConfig::prediction_design() const {
  return design(*this, prediction_spacing, prediction_end);
}

void ExperimentConfig::validate(bool allow_inverse_crime) const {
  for (const auto* g : {&truth_grid, &inversion_grid})
    if (g->nx < 1 || g->ny < 1) throw ConfigError("grid dimensions must be positive");
  if (!(lx > 0.0 && ly > 0.0)) throw ConfigError("domain extents must be positive");
  if (truth_grid == inversion_grid && !allow_inverse_crime)
    throw ConfigError("truth and inversion grids are identical (inverse crime); pass --allow-inverse-crime to proceed");
  fluid.validate();
  prior.validate();
  const long inv_cells = static_cast<long>(inversion_grid.nx) * inversion_grid.ny;
  const long truth_cells = static_cast<long>(truth_grid.nx) * truth_grid.ny;
  if (n_modes < 1 || n_modes > inv_cells) throw ConfigError("prior.n_modes must lie in [1, inversion cells]");
  if (truth_modes < 0 || truth_modes > truth_cells) throw ConfigError("prior.truth_modes must lie in [0, truth cells]");
  schedule.validate(truth());
  schedule.validate(inversion());
  if (!(dt > 0.0)) throw ConfigError("schedule.dt_days must be positive");
  for (double s : {observation_spacing, prediction_spacing})
    if (!(s > 0.0)) throw ConfigError("sampling spacing must be positive");
  if (!(observation_end > 0.0 && observation_end <= schedule.horizon))
    throw ConfigError("observation.end_days must lie in (0, horizon]");
  if (!(prediction_end > 0.0 && prediction_end <= schedule.horizon))
    throw ConfigError("prediction.end_days must lie in (0, horizon]");
  if (observation_design().times.empty() || prediction_design().times.empty())
    throw ConfigError("observation and prediction designs must be non-empty");
  if (!(noise_relative_std >= 0.0)) throw ConfigError("noise.relative_std must be >= 0");
  if (dsi.ensemble_size < 2) throw ConfigError("dsi.ensemble_size must be >= 2");
  if (dsi.n_samples < 1) throw ConfigError("dsi.n_samples must be >= 1");
  for (long l : dsi.ell_sweep)
    if (l < 2) throw ConfigError("dsi.ell_sweep entries must be >= 2");
  if (dsi.transform.enabled) {
    if (!(dsi.transform.delta_mpa > 0.0)) throw ConfigError("dsi.transform.delta_mpa must be positive");
    const auto& times = prediction_design().times;
    const double after = units::days(dsi.transform.after_day);
    if (!(times.front() <= after && times.back() > after))
      throw ConfigError("dsi.transform.after_day must leave instants on both sides");
  }
  if (mcmc.n_predictive < 1) throw ConfigError("mcmc.n_predictive must be >= 1");
  mcmc::ChainConfig probe;
  probe.n_chains = mcmc.chains;
  probe.n_iterations = mcmc.iterations;
  probe.burn_in = mcmc.burn_in;
  probe.beta = mcmc.beta;
  probe.thinning = mcmc.thinning;
  probe.validate();
  if (map.max_iterations < 0) throw ConfigError("map.max_iterations must be >= 0");
  if (!(map.fd_step > 0.0)) throw ConfigError("map.fd_step must be positive");
  if (map.propagation != "linearized" && map.propagation != "sampled")
    throw ConfigError("map.propagation must be 'linearized' or 'sampled'");
  if (map.n_samples < 1) throw ConfigError("map.n_samples must be >= 1");
}

json to_json(const ExperimentConfig& c) {
  json wells = json::array();
  for (const auto& [x, y] : c.schedule.positions) wells.push_back({x, y});
  json segments = json::array();
  for (const auto& s : c.schedule.segments) {
    json rates = json::array();
    for (double r : s.rates) rates.push_back(r * units::kSecondsPerDay);
    segments.push_back({{"start_days", units::to_days(s.start)},
                        {"end_days", units::to_days(s.end)},
                        {"rates_m3_per_day", rates}});
  }
  return {
      {"seed", c.seed},
      {"grids",
       {{"truth", {{"nx", c.truth_grid.nx}, {"ny", c.truth_grid.ny}}},
        {"inversion", {{"nx", c.inversion_grid.nx}, {"ny", c.inversion_grid.ny}}},
        {"lx", c.lx},
        {"ly", c.ly}}},
      {"fluid",
       {{"compressibility", c.fluid.compressibility},
        {"viscosity", c.fluid.viscosity},
        {"porosity", c.fluid.porosity},
        {"initial_pressure_mpa", units::to_megapascal(c.fluid.initial_pressure)}}},
      {"prior",
       {{"std", c.prior.sigma},
        {"lengthscale", c.prior.lengthscale},
        {"mean", c.prior.mean},
        {"n_modes", c.n_modes},
        {"truth_modes", c.truth_modes}}},
      {"schedule",
       {{"horizon_days", units::to_days(c.schedule.horizon)},
        {"dt_days", units::to_days(c.dt)},
        {"wells", wells},
        {"segments", segments}}},
      {"observation",
       {{"spacing_days", units::to_days(c.observation_spacing)}, {"end_days", units::to_days(c.observation_end)}}},
      {"prediction",
       {{"spacing_days", units::to_days(c.prediction_spacing)}, {"end_days", units::to_days(c.prediction_end)}}},
      {"noise", {{"relative_std", c.noise_relative_std}}},
      {"min_physical_pressure_mpa", units::to_megapascal(c.min_physical_pressure)},
      {"dsi",
       {{"ensemble_size", c.dsi.ensemble_size},
        {"n_samples", c.dsi.n_samples},
        {"ell_sweep", c.dsi.ell_sweep},
        {"transform",
         {{"enabled", c.dsi.transform.enabled},
          {"delta_mpa", c.dsi.transform.delta_mpa},
          {"after_day", c.dsi.transform.after_day}}}}},
      {"mcmc",
       {{"chains", c.mcmc.chains},
        {"iterations", c.mcmc.iterations},
        {"burn_in", c.mcmc.burn_in},
        {"beta", c.mcmc.beta},
        {"thinning", c.mcmc.thinning},
        {"adapt", c.mcmc.adapt},
        {"n_predictive", c.mcmc.n_predictive}}},
      {"map",
       {{"max_iterations", c.map.max_iterations},
        {"gradient_tolerance", c.map.gradient_tolerance},
        {"fd_step", c.map.fd_step},
        {"propagation", c.map.propagation},
        {"n_samples", c.map.n_samples}}},
  };
}

ExperimentConfig config_from_json(const json& patch) {
  if (!patch.is_object()) throw ConfigError("configuration must be a JSON object");
  const json defaults = to_json(ExperimentConfig{});
  check_known_keys(patch, defaults, "");
  json j = defaults;
  j.merge_patch(patch);

  ExperimentConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& g = j.at("grids");
    c.truth_grid = {g.at("truth").at("nx").get<int>(), g.at("truth").at("ny").get<int>()};
    c.inversion_grid = {g.at("inversion").at("nx").get<int>(), g.at("inversion").at("ny").get<int>()};
    c.lx = g.at("lx").get<double>();
    c.ly = g.at("ly").get<double>();

    const auto& f = j.at("fluid");
    c.fluid.compressibility = f.at("compressibility").get<double>();
    c.fluid.viscosity = f.at("viscosity").get<double>();
    c.fluid.porosity = f.at("porosity").get<double>();
    c.fluid.initial_pressure = units::megapascal(f.at("initial_pressure_mpa").get<double>());

    const auto& p = j.at("prior");
    c.prior.sigma = p.at("std").get<double>();
    c.prior.lengthscale = p.at("lengthscale").get<double>();
    c.prior.mean = p.at("mean").get<double>();
    c.n_modes = p.at("n_modes").get<int>();
    c.truth_modes = p.at("truth_modes").get<int>();

    const auto& s = j.at("schedule");
    c.schedule = {};
    c.schedule.horizon = units::days(s.at("horizon_days").get<double>());
    c.dt = units::days(s.at("dt_days").get<double>());
    for (const auto& w : s.at("wells")) {
      if (!w.is_array() || w.size() != 2) throw ConfigError("schedule.wells entries must be [x, y]");
      c.schedule.positions.emplace_back(w[0].get<double>(), w[1].get<double>());
    }
    for (const auto& seg : s.at("segments")) {
      sim2d::RateSegment r;
      r.start = units::days(seg.at("start_days").get<double>());
      r.end = units::days(seg.at("end_days").get<double>());
      for (const auto& q : seg.at("rates_m3_per_day")) r.rates.push_back(units::per_day(q.get<double>()));
      c.schedule.segments.push_back(std::move(r));
    }

    c.observation_spacing = units::days(j.at("observation").at("spacing_days").get<double>());
    c.observation_end = units::days(j.at("observation").at("end_days").get<double>());
    c.prediction_spacing = units::days(j.at("prediction").at("spacing_days").get<double>());
    c.prediction_end = units::days(j.at("prediction").at("end_days").get<double>());
    c.noise_relative_std = j.at("noise").at("relative_std").get<double>();
    c.min_physical_pressure = units::megapascal(j.at("min_physical_pressure_mpa").get<double>());

    const auto& d = j.at("dsi");
    c.dsi.ensemble_size = d.at("ensemble_size").get<long>();
    c.dsi.n_samples = d.at("n_samples").get<long>();
    c.dsi.ell_sweep = d.at("ell_sweep").get<std::vector<long>>();
    c.dsi.transform.enabled = d.at("transform").at("enabled").get<bool>();
    c.dsi.transform.delta_mpa = d.at("transform").at("delta_mpa").get<double>();
    c.dsi.transform.after_day = d.at("transform").at("after_day").get<double>();

    const auto& m = j.at("mcmc");
    c.mcmc.chains = m.at("chains").get<int>();
    c.mcmc.iterations = m.at("iterations").get<long>();
    c.mcmc.burn_in = m.at("burn_in").get<double>();
    c.mcmc.beta = m.at("beta").get<double>();
    c.mcmc.thinning = m.at("thinning").get<long>();
    c.mcmc.adapt = m.at("adapt").get<bool>();
    c.mcmc.n_predictive = m.at("n_predictive").get<long>();

    const auto& mp = j.at("map");
    c.map.max_iterations = mp.at("max_iterations").get<int>();
    c.map.gradient_tolerance = mp.at("gradient_tolerance").get<double>();
    c.map.fd_step = mp.at("fd_step").get<double>();
    c.map.propagation = mp.at("propagation").get<std::string>();
    c.map.n_samples = mp.at("n_samples").get<long>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("seed");
  return fnv1a(j.dump());
}

std::uint64_t sub_seed(std::uint64_t master, std::string_view tag, std::uint64_t attempt) {
  std::ostringstream key;
  key << master << '/' << tag << '/' << attempt;
  return fnv1a(key.str());
}

}  // namespace dsi::harness
