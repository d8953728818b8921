#pragma once

#include "dsi/linalg.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace dsi {

using Rng = std::mt19937_64;

/// Independent stream for (seed, stream); used to give every worker its own RNG.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

/// Vector of i.i.d. standard normals.
Vector standard_normal(Rng& rng, Eigen::Index n);

namespace stats {

/// Empirical quantile with linear interpolation between order statistics.
double quantile(std::span<const double> sorted, double prob);
double quantile_unsorted(std::vector<double> values, double prob);

/// Neumaier-compensated sum.
double compensated_sum(std::span<const double> values);

/// Row-wise sample mean and unbiased covariance of a samples-by-dimension matrix.
Vector mean_rows(const Matrix& samples);
Matrix covariance_rows(const Matrix& samples);

/// W1 distance between two empirical distributions: the integral of |F - G|.
double wasserstein1(std::vector<double> a, std::vector<double> b);

/// Two-sample Kolmogorov-Smirnov statistic sup |F - G|.
double ks_statistic(std::vector<double> a, std::vector<double> b);
/// Asymptotic critical value of the two-sample KS statistic at level alpha.
double ks_critical_value(std::size_t n, std::size_t m, double alpha);

/// Rank-normalised split R-hat (maximum of bulk and folded variants). Each
/// entry of `chains` holds the draws of one chain for a single scalar.
double split_rhat(const std::vector<std::vector<double>>& chains);

/// Rank-normalised bulk effective sample size over all chains.
double ess_bulk(const std::vector<std::vector<double>>& chains);

}  // namespace stats
}  // namespace dsi
