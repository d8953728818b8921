#pragma once

#include "dsi/linalg.hpp"
#include "dsi/model.hpp"
#include "dsi/stats.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace dsi::mcmc {

/// Log-likelihood up to a constant; throws SimulationError when the model fails.
using LogLikelihood = std::function<double(const Vector&)>;

struct ChainConfig {
  int n_chains{4};
  long n_iterations{500000};
  double burn_in{0.5};   ///< fraction of each chain discarded
  double beta{0.1};      ///< initial pCN step size
  long thinning{10};
  std::uint64_t seed{0};
  bool adapt{true};      ///< Robbins-Monro tuning of beta during burn-in only
  double target_acceptance{0.25};
  unsigned workers{0};

  void validate() const;
  long burn_in_iterations() const;
  /// Samples kept per chain after burn-in and thinning.
  long retained_per_chain() const;
};

struct PcnState {
  Vector xi;
  double log_like{0.0};
};

struct PcnStep {
  PcnState next;
  bool accepted{false};
  bool failed{false};  ///< the proposal's simulation failed (auto-rejected)
};

/// Proposal sqrt(1 - beta^2) xi + beta w with w ~ N(0, I); accepted with
/// probability min(1, exp(l(xi') - l(xi))).
PcnStep pcn_step(const PcnState& current, const LogLikelihood& log_like, double beta, Rng& rng);

struct ChainResult {
  Matrix samples;            ///< retained draws, chain-major rows
  std::vector<long> chain_sizes;
  double acceptance_rate{0.0};  ///< post burn-in, pooled over chains
  long failures{0};             ///< failed proposals across all iterations
  std::vector<double> final_beta;
  Vector r_hat;              ///< per coordinate
  Vector ess;                ///< per coordinate

  /// Draws of coordinate `coord` split by chain.
  std::vector<std::vector<double>> chains_of(Eigen::Index coord) const;
};

/// Independent pCN chains, each started from a prior draw. Deterministic for a
/// given seed regardless of the worker count.
ChainResult run_chains(const ChainConfig& config, const LogLikelihood& log_like, Eigen::Index dim);

struct PushResult {
  Matrix predictions;  ///< one row per successful sample
  long failures{0};
};

/// Evaluates `predictive` on every row of `samples` in parallel; failed
/// evaluations are dropped and counted.
PushResult push_predictive(const Matrix& samples, const VectorModel& predictive, unsigned workers = 0);

}  // namespace dsi::mcmc
