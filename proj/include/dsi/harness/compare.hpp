#pragma once

#include "dsi/harness/experiment.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dsi::harness {

/// Per-marginal summaries of one method's prediction samples.
struct MarginalSummary {
  Vector mean;
  Vector std_dev;
  Vector lower;  ///< 2.5% empirical quantile
  Vector upper;  ///< 97.5% empirical quantile
};

MarginalSummary summarize(const Matrix& samples);

struct MethodSummary {
  std::string name;
  Eigen::Index n_samples{0};
  MarginalSummary marginals;
  std::vector<bool> covered;  ///< truth inside [lower, upper]; empty without truth
  nlohmann::json report;      ///< the method's own report fragment
};

/// W1 distance between two methods for every marginal.
struct PairDistance {
  std::string first;
  std::string second;
  Vector w1;
};

struct ComparisonReport {
  std::vector<MethodSummary> methods;
  std::vector<PairDistance> distances;
  bool has_truth{false};

  const MethodSummary& method(const std::string& name) const;
  /// Values in MPa; marginals reshaped to [well][time] using the design.
  nlohmann::json to_json(const sim2d::PredictionDesign& design) const;
};

/// Throws ConfigError when methods disagree on the number of marginals.
ComparisonReport compare(const std::vector<MethodResult>& methods, const Vector* truth = nullptr);

/// Reads samples_<name>.bin and report_<name>.json (if present) from `dir`.
/// Mixed configuration hashes among the inputs are refused unless allowed.
std::vector<MethodResult> load_methods(const std::filesystem::path& dir, const std::vector<std::string>& names,
                                       bool allow_mixed_provenance, io::Provenance* prov = nullptr);

/// Writes report.json plus plot data: bands.csv (bands over time per well),
/// final_time.csv (final-time samples per method) and ell_sweep.csv (final-time samples
/// of the ell sweep, with prior and mcmc for reference) when a sweep is present.
void write_comparison(const std::filesystem::path& dir, const ComparisonReport& report,
                      const std::vector<MethodResult>& methods, const Vector* truth,
                      const sim2d::PredictionDesign& design, const io::Provenance& prov);

/// Static SVG renderings of the CSV plot data found in `dir`. Returns the files written.
std::vector<std::filesystem::path> export_plots(const std::filesystem::path& dir);

}  // namespace dsi::harness
