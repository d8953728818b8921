#include "dsi/mcmc.hpp"

#include "dsi/error.hpp"
#include "dsi/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dsi::mcmc {

void ChainConfig::validate() const {
  if (n_chains < 1) throw ConfigError("mcmc: n_chains must be >= 1");
  if (n_iterations < 1) throw ConfigError("mcmc: n_iterations must be >= 1");
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw ConfigError("mcmc: burn_in must lie in [0, 1)");
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("mcmc: beta must lie in (0, 1]");
  if (thinning < 1) throw ConfigError("mcmc: thinning must be >= 1");
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
    throw ConfigError("mcmc: target_acceptance must lie in (0, 1)");
}

long ChainConfig::burn_in_iterations() const {
  return static_cast<long>(std::floor(burn_in * static_cast<double>(n_iterations)));
}

long ChainConfig::retained_per_chain() const {
  return (n_iterations - burn_in_iterations()) / thinning;
}

PcnStep pcn_step(const PcnState& current, const LogLikelihood& log_like, double beta, Rng& rng) {
  const Vector w = standard_normal(rng, current.xi.size());
  const Vector proposal = std::sqrt(1.0 - beta * beta) * current.xi + beta * w;
  std::uniform_real_distribution<double> uniform;
  const double u = uniform(rng);
  PcnStep out{current, false, false};
  double ll = 0.0;
  try {
    ll = log_like(proposal);
  } catch (const SimulationError&) {
    out.failed = true;
    return out;
  }
  if (!std::isfinite(ll)) {
    out.failed = true;
    return out;
  }
  if (std::log(u) < ll - current.log_like) {
    out.next = {proposal, ll};
    out.accepted = true;
  }
  return out;
}

std::vector<std::vector<double>> ChainResult::chains_of(Eigen::Index coord) const {
  std::vector<std::vector<double>> out;
  Eigen::Index row = 0;
  for (long size : chain_sizes) {
    std::vector<double> c(static_cast<std::size_t>(size));
    for (long i = 0; i < size; ++i) c[static_cast<std::size_t>(i)] = samples(row + i, coord);
    out.push_back(std::move(c));
    row += size;
  }
  return out;
}

namespace {

struct SingleChain {
  Matrix samples;
  long accepted{0};
  long counted{0};
  long failures{0};
  double beta{0.0};
};

SingleChain run_one(const ChainConfig& cfg, const LogLikelihood& log_like, Eigen::Index dim, int chain) {
  Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(chain));
  SingleChain out;
  out.beta = cfg.beta;
  const long burn = cfg.burn_in_iterations();
  const long kept = cfg.retained_per_chain();
  out.samples.resize(kept, dim);

  // Start from a prior draw; redraw while the model fails there.
  PcnState state;
  for (int attempt = 0;; ++attempt) {
    state.xi = standard_normal(rng, dim);
    try {
      state.log_like = log_like(state.xi);
      if (std::isfinite(state.log_like)) break;
    } catch (const SimulationError&) {
    }
    ++out.failures;
    if (attempt > 1000) throw SimulationError("mcmc: no feasible starting point after 1000 prior draws");
  }

  double log_beta = std::log(cfg.beta);
  long row = 0;
  for (long it = 0; it < cfg.n_iterations; ++it) {
    const PcnStep s = pcn_step(state, log_like, out.beta, rng);
    state = s.next;
    if (s.failed) ++out.failures;
    if (it < burn) {
      if (cfg.adapt) {
        const double gain = std::pow(static_cast<double>(it) + 1.0, -0.6);
        log_beta += gain * ((s.accepted ? 1.0 : 0.0) - cfg.target_acceptance);
        log_beta = std::clamp(log_beta, std::log(1e-4), 0.0);
        out.beta = std::exp(log_beta);
      }
      continue;
    }
    ++out.counted;
    if (s.accepted) ++out.accepted;
    const long offset = it - burn + 1;
    if (offset % cfg.thinning == 0 && row < kept) out.samples.row(row++) = state.xi.transpose();
  }
  return out;
}

}  // namespace

ChainResult run_chains(const ChainConfig& config, const LogLikelihood& log_like, Eigen::Index dim) {
  config.validate();
  if (dim < 1) throw ConfigError("mcmc: parameter dimension must be >= 1");
  std::vector<SingleChain> chains(static_cast<std::size_t>(config.n_chains));
  parallel_for(chains.size(), config.workers, [&](std::size_t c) {
    chains[c] = run_one(config, log_like, dim, static_cast<int>(c));
  });

  ChainResult result;
  const long kept = config.retained_per_chain();
  result.samples.resize(kept * config.n_chains, dim);
  long accepted = 0, counted = 0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    result.samples.middleRows(static_cast<Eigen::Index>(c) * kept, kept) = chains[c].samples;
    result.chain_sizes.push_back(kept);
    accepted += chains[c].accepted;
    counted += chains[c].counted;
    result.failures += chains[c].failures;
    result.final_beta.push_back(chains[c].beta);
  }
  result.acceptance_rate = counted > 0 ? static_cast<double>(accepted) / static_cast<double>(counted) : 0.0;

  result.r_hat = Vector::Constant(dim, std::numeric_limits<double>::quiet_NaN());
  result.ess = Vector::Constant(dim, std::numeric_limits<double>::quiet_NaN());
  if (kept >= 4) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      const auto draws = result.chains_of(j);
      result.r_hat(j) = stats::split_rhat(draws);
      result.ess(j) = stats::ess_bulk(draws);
    }
  }
  return result;
}

PushResult push_predictive(const Matrix& samples, const VectorModel& predictive, unsigned workers) {
  const auto n = static_cast<std::size_t>(samples.rows());
  std::vector<Vector> outputs(n);
  std::vector<char> ok(n, 0);
  parallel_for(n, workers, [&](std::size_t i) {
    try {
      outputs[i] = predictive(samples.row(static_cast<Eigen::Index>(i)).transpose());
      ok[i] = outputs[i].allFinite() ? 1 : 0;
    } catch (const SimulationError&) {
    }
  });
  PushResult out;
  Eigen::Index m = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (!ok[i]) continue;
    if (m < 0) m = outputs[i].size();
    if (outputs[i].size() != m) throw SimulationError("push_predictive: inconsistent output size");
  }
  const auto good = static_cast<Eigen::Index>(std::count(ok.begin(), ok.end(), 1));
  out.failures = static_cast<long>(n) - good;
  out.predictions.resize(good, std::max<Eigen::Index>(m, 0));
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (ok[i]) out.predictions.row(row++) = outputs[i].transpose();
  return out;
}

}  // namespace dsi::mcmc
