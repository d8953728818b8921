#include "dsi/harness/experiment.hpp"

#include "dsi/bayes.hpp"
#include "dsi/error.hpp"
#include "dsi/mcmc.hpp"
#include "dsi/transform.hpp"
#include "dsi/units.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

namespace dsi::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class Stopwatch {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_{std::chrono::steady_clock::now()};
};

double max_or_nan(const Vector& v) {
  return (v.size() == 0 || v.hasNaN()) ? std::nan("") : v.maxCoeff();
}

double min_or_nan(const Vector& v) {
  return (v.size() == 0 || v.hasNaN()) ? std::nan("") : v.minCoeff();
}

// Simulated horizon covering the last observation, on the time-step lattice.
double observation_horizon(const ExperimentConfig& c) {
  const double steps = std::ceil(c.observation_end / c.dt - 1e-9);
  return std::min(c.schedule.horizon, steps * c.dt);
}

std::shared_ptr<const IncrementLogTransform> prediction_transform(const ExperimentConfig& c) {
  if (!c.dsi.transform.enabled) return nullptr;
  const auto design = c.prediction_design();
  const double after = units::days(c.dsi.transform.after_day);
  const auto first = static_cast<Eigen::Index>(
      std::count_if(design.times.begin(), design.times.end(), [&](double t) { return t <= after; }));
  return std::make_shared<IncrementLogTransform>(IncrementLogTransform::after_index(
      static_cast<Eigen::Index>(design.wells.size()), static_cast<Eigen::Index>(design.times.size()), first,
      c.dsi.transform.delta_mpa, units::kPascalPerMegapascal));
}

Vector row_vector(const Matrix& m) {
  if (m.rows() != 1) throw ConfigError("expected a single-row sample file");
  return m.row(0).transpose();
}

}  // namespace

sim2d::WellSchedule truncate_schedule(const sim2d::WellSchedule& s, double horizon) {
  sim2d::WellSchedule out;
  out.positions = s.positions;
  out.horizon = std::min(horizon, s.horizon);
  for (const auto& seg : s.segments) {
    if (seg.start >= out.horizon) break;
    out.segments.push_back(seg);
    out.segments.back().end = std::min(seg.end, out.horizon);
  }
  return out;
}

Problem::Problem(ExperimentConfig config)
    : Problem(config, build_kl_basis(config.inversion(), config.prior, config.n_modes)) {}

Problem::Problem(ExperimentConfig config, KLBasis basis)
    : config_(std::move(config)),
      basis_(std::make_shared<const KLBasis>(std::move(basis))),
      counter_(std::make_shared<std::atomic<long>>(0)) {
  config_.validate(true);
  if (!(basis_->grid == config_.inversion())) throw ConfigError("KL basis does not match the inversion grid");
  observation_schedule_ = truncate_schedule(config_.schedule, observation_horizon(config_));
  obs_design_ = config_.observation_design();
  pred_design_ = config_.prediction_design();
}

sim2d::PressureHistory Problem::run(const Vector& xi, double horizon) const {
  ++*counter_;
  const Field perm = exp_field(sample_field(*basis_, xi));
  const auto& schedule = horizon < config_.schedule.horizon ? observation_schedule_ : config_.schedule;
  auto h = sim2d::simulate(perm, schedule, config_.fluid, config_.dt);
  if (!h.ok()) throw SimulationError("simulation failed: " + h.failure);
  return h;
}

Vector Problem::forward(const Vector& xi) const {
  return sim2d::observe(run(xi, observation_schedule_.horizon), obs_design_);
}

Vector Problem::predictive(const Vector& xi) const {
  return sim2d::predict(run(xi, config_.schedule.horizon), pred_design_);
}

MemberOutput Problem::member(const Vector& xi) const {
  const auto h = run(xi, config_.schedule.horizon);
  MemberOutput out{sim2d::observe(h, obs_design_), sim2d::predict(h, pred_design_), MemberStatus::ok};
  if (std::min(out.data.minCoeff(), out.prediction.minCoeff()) < config_.min_physical_pressure)
    out.status = MemberStatus::non_physical;
  return out;
}

Matrix Problem::noise_covariance() const {
  const auto d = static_cast<Eigen::Index>(obs_design_.size());
  const double sd = config_.noise_std();
  return sd * sd * Matrix::Identity(d, d);
}

Truth generate_truth(const ExperimentConfig& config) {
  config.validate(true);
  const Grid grid = config.truth();
  const int modes = config.truth_modes > 0 ? config.truth_modes : config.n_modes;
  const KLBasis basis = build_kl_basis(grid, config.prior, std::min(modes, static_cast<int>(grid.cells())));
  Truth t;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 100) throw SimulationError("truth: 100 consecutive prior draws failed to simulate");
    Rng rng = make_rng(sub_seed(config.seed, "truth", static_cast<std::uint64_t>(attempt)), 0);
    t.xi = standard_normal(rng, basis.n_modes());
    t.log_permeability = sample_field(basis, t.xi);
    const auto h = sim2d::simulate(exp_field(t.log_permeability), config.schedule, config.fluid, config.dt);
    t.attempts = attempt + 1;
    if (!h.ok()) continue;
    t.clean_observations = sim2d::observe(h, config.observation_design());
    t.clean_predictions = sim2d::predict(h, config.prediction_design());
    break;
  }
  Rng noise = make_rng(sub_seed(config.seed, "noise"), 0);
  t.observations = t.clean_observations + config.noise_std() * standard_normal(noise, t.clean_observations.size());
  return t;
}

void write_truth(const fs::path& dir, const Truth& truth, const ExperimentConfig& config, const io::Provenance& prov) {
  fs::create_directories(dir);
  io::write_field(dir / "truth_field.bin", truth.log_permeability, prov);
  io::write_field_csv(dir / "truth_field.csv", truth.log_permeability, prov);
  io::write_samples(dir / "truth_observations.bin", truth.clean_observations.transpose(), prov);
  io::write_samples(dir / "truth_predictions.bin", truth.clean_predictions.transpose(), prov);
  io::write_samples(dir / "observations.bin", truth.observations.transpose(), prov);

  auto table = [](const sim2d::SamplingDesign& design, std::initializer_list<const Vector*> columns) {
    Matrix m(static_cast<Eigen::Index>(design.size()), 2 + static_cast<Eigen::Index>(columns.size()));
    Eigen::Index row = 0;
    for (int w : design.wells)
      for (double t : design.times) {
        m(row, 0) = w + 1;
        m(row, 1) = units::to_days(t);
        Eigen::Index col = 2;
        for (const Vector* c : columns) m(row, col++) = units::to_megapascal((*c)(row));
        ++row;
      }
    return m;
  };
  io::write_matrix_csv(dir / "observations.csv",
                       table(config.observation_design(), {&truth.clean_observations, &truth.observations}),
                       {"well", "time_days", "clean_mpa", "observed_mpa"}, prov);
  io::write_matrix_csv(dir / "truth_predictions.csv", table(config.prediction_design(), {&truth.clean_predictions}),
                       {"well", "time_days", "pressure_mpa"}, prov);
}

Vector read_observations(const fs::path& dir, io::Provenance* prov) {
  return row_vector(io::read_samples(dir / "observations.bin", prov));
}

Vector read_truth_predictions(const fs::path& dir, io::Provenance* prov) {
  return row_vector(io::read_samples(dir / "truth_predictions.bin", prov));
}

Ensemble prior_ensemble(const Problem& problem, Eigen::Index size, unsigned workers) {
  const Eigen::Index n = problem.dim();
  return build_ensemble([n](Rng& rng) { return standard_normal(rng, n); },
                        [&problem](const Vector& xi) { return problem.member(xi); }, size,
                        sub_seed(problem.config().seed, "ensemble"), workers);
}

MethodResult prior_predictive(const Ensemble& ensemble, Eigen::Index count) {
  const Ensemble ok = ensemble.successes();
  MethodResult r;
  r.name = "prior";
  r.samples = ok.predictions.topRows(std::min(count, ok.size()));
  r.report = {{"method", "prior"}, {"n_samples", r.samples.rows()}};
  return r;
}

MethodResult run_dsi(const Problem& problem, const Ensemble& ensemble, Eigen::Index ell, const Vector& d_obs,
                     const std::string& name) {
  const auto& c = problem.config();
  if (ell < 2 || ell > ensemble.size())
    throw ConfigError("dsi: ell = " + std::to_string(ell) + " outside [2, " + std::to_string(ensemble.size()) + "]");
  const Stopwatch clock;
  DsiOptions opts;
  opts.n_samples = c.dsi.n_samples;
  opts.seed = sub_seed(c.seed, "dsi");
  const auto transform = prediction_transform(c);
  opts.prediction_transform = transform;
  const Ensemble subset = ensemble.head(ell);
  const DsiResult res = dsi_pipeline(subset, d_obs, problem.noise_covariance(), opts);

  MethodResult r;
  r.name = name;
  r.samples = res.samples;
  long non_physical = 0;
  for (auto s : subset.status) non_physical += s == MemberStatus::non_physical;
  r.report = {{"method", "dsi"},
              {"ell", ell},
              {"members_used", res.used},
              {"members_discarded", res.discarded},
              {"members_non_physical", non_physical},
              {"clamped_eigenvalues", res.conditional.clamped},
              {"n_samples", res.samples.rows()},
              {"simulations", ell},
              {"runtime_seconds", clock.seconds()},
              {"transform", transform ? transform->metadata() : json(nullptr)}};
  return r;
}

std::vector<MethodResult> sweep_ell(const Problem& problem, const Ensemble& ensemble, const Vector& d_obs) {
  std::vector<MethodResult> out;
  for (long ell : problem.config().dsi.ell_sweep)
    out.push_back(run_dsi(problem, ensemble, ell, d_obs, "dsi_l" + std::to_string(ell)));
  return out;
}

MethodResult run_mcmc(const Problem& problem, const Vector& d_obs, unsigned workers) {
  const auto& c = problem.config();
  if (!(c.noise_std() > 0.0)) throw ConfigError("mcmc: observation noise must be positive");
  const Stopwatch clock;
  const long sims_before = problem.simulations();
  mcmc::ChainConfig cfg;
  cfg.n_chains = c.mcmc.chains;
  cfg.n_iterations = c.mcmc.iterations;
  cfg.burn_in = c.mcmc.burn_in;
  cfg.beta = c.mcmc.beta;
  cfg.thinning = c.mcmc.thinning;
  cfg.adapt = c.mcmc.adapt;
  cfg.seed = sub_seed(c.seed, "mcmc");
  cfg.workers = workers;
  const double var = c.noise_std() * c.noise_std();
  const mcmc::LogLikelihood ll = [&](const Vector& xi) {
    return -0.5 * (d_obs - problem.forward(xi)).squaredNorm() / var;
  };
  const auto chains = mcmc::run_chains(cfg, ll, problem.dim());
  const long chain_sims = problem.simulations() - sims_before;

  const Eigen::Index total = chains.samples.rows();
  const Eigen::Index keep = std::min<Eigen::Index>(c.mcmc.n_predictive, total);
  if (keep < 1) throw ConfigError("mcmc: no retained draws; increase iterations or reduce thinning");
  Matrix picked(keep, chains.samples.cols());
  for (Eigen::Index i = 0; i < keep; ++i) picked.row(i) = chains.samples.row(i * total / keep);
  const auto pushed = mcmc::push_predictive(picked, [&](const Vector& xi) { return problem.predictive(xi); }, workers);

  MethodResult r;
  r.name = "mcmc";
  r.samples = pushed.predictions;
  r.report = {{"method", "mcmc"},
              {"chains", cfg.n_chains},
              {"iterations", cfg.n_iterations},
              {"retained_draws", total},
              {"acceptance_rate", chains.acceptance_rate},
              {"failed_proposals", chains.failures},
              {"final_beta", chains.final_beta},
              {"max_r_hat", max_or_nan(chains.r_hat)},
              {"min_ess", min_or_nan(chains.ess)},
              {"predictive_failures", pushed.failures},
              {"n_samples", r.samples.rows()},
              {"simulations", chain_sims + static_cast<long>(keep)},
              {"runtime_seconds", clock.seconds()}};
  return r;
}

MethodResult run_map(const Problem& problem, const Vector& d_obs, unsigned workers) {
  const auto& c = problem.config();
  if (!(c.noise_std() > 0.0)) throw ConfigError("map: observation noise must be positive");
  const Stopwatch clock;
  bayes::MapOptions opts;
  opts.max_iterations = c.map.max_iterations;
  opts.gradient_tolerance = c.map.gradient_tolerance;
  opts.fd_step = c.map.fd_step;
  opts.workers = workers;
  const VectorModel forward = [&](const Vector& xi) { return problem.forward(xi); };
  const VectorModel predictive = [&](const Vector& xi) { return problem.predictive(xi); };
  const auto post = bayes::map_estimate(d_obs, forward, bayes::NoiseModel(problem.noise_covariance()),
                                        bayes::GaussianPrior(problem.dim()), opts);

  const long before = problem.simulations();
  Rng rng = make_rng(sub_seed(c.seed, "map"), 0);
  MethodResult r;
  r.name = "map";
  long failures = 0;
  if (c.map.propagation == "linearized") {
    const auto g = bayes::linearized_predictive(post.k_map, post.covariance, predictive, c.map.fd_step, workers);
    r.samples.resize(c.map.n_samples, g.mean.size());
    for (Eigen::Index i = 0; i < r.samples.rows(); ++i)
      r.samples.row(i) = bayes::sample_gaussian(g.mean, g.factor, standard_normal(rng, g.factor.cols())).transpose();
  } else {
    Matrix ks(c.map.n_samples, problem.dim());
    for (Eigen::Index i = 0; i < ks.rows(); ++i)
      ks.row(i) = bayes::sample_gaussian(post.k_map, post.factor, standard_normal(rng, problem.dim())).transpose();
    const auto pushed = mcmc::push_predictive(ks, predictive, workers);
    r.samples = pushed.predictions;
    failures = pushed.failures;
  }

  r.report = {{"method", "map"},
              {"status", bayes::to_string(post.status)},
              {"iterations", post.trace.back().iteration},
              {"objective", post.trace.back().objective},
              {"gradient_norm", post.trace.back().gradient_norm},
              {"forward_like_solves", post.solve_count},
              {"propagation", c.map.propagation},
              {"predictive_solves", problem.simulations() - before},
              {"predictive_failures", failures},
              {"n_samples", r.samples.rows()},
              {"simulations", post.solve_count + problem.simulations() - before},
              {"runtime_seconds", clock.seconds()}};
  return r;
}

void write_method(const fs::path& dir, const MethodResult& result, const io::Provenance& prov) {
  fs::create_directories(dir);
  io::write_samples(dir / ("samples_" + result.name + ".bin"), result.samples, prov);
  json report = result.report;
  report["name"] = result.name;
  report["config_hash"] = prov.config_hash;
  report["seed"] = prov.seed;
  std::ofstream out(dir / ("report_" + result.name + ".json"));
  if (!out) throw ConfigError("cannot write report in " + dir.string());
  out << report.dump(2) << '\n';
}

}  // namespace dsi::harness
