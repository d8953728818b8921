#include "dsi/stats.hpp"

#include "dsi/error.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dsi {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

Vector standard_normal(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

namespace stats {

double quantile(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw ConfigError("quantile of an empty sample");
  const double pos = std::clamp(prob, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double quantile_unsorted(std::vector<double> values, double prob) {
  std::sort(values.begin(), values.end());
  return quantile(values, prob);
}

double compensated_sum(std::span<const double> values) {
  double sum = 0.0;
  double comp = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }
  return sum + comp;
}

Vector mean_rows(const Matrix& samples) {
  if (samples.rows() == 0) throw ConfigError("mean of an empty sample");
  return samples.colwise().mean().transpose();
}

Matrix covariance_rows(const Matrix& samples) {
  if (samples.rows() < 2) throw ConfigError("covariance needs at least two samples");
  const Matrix centred = samples.rowwise() - samples.colwise().mean();
  return symmetrize(centred.transpose() * centred / static_cast<double>(samples.rows() - 1));
}

double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ConfigError("wasserstein1: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  // Sweep the merged support; between consecutive breakpoints both CDFs are constant.
  std::size_t ia = 0, ib = 0;
  double x_prev = std::min(a.front(), b.front());
  double total = 0.0;
  while (ia < a.size() || ib < b.size()) {
    const double x = (ib >= b.size() || (ia < a.size() && a[ia] <= b[ib])) ? a[ia] : b[ib];
    const double fa = static_cast<double>(ia) / na;
    const double fb = static_cast<double>(ib) / nb;
    total += std::abs(fa - fb) * (x - x_prev);
    while (ia < a.size() && a[ia] == x) ++ia;
    while (ib < b.size() && b[ib] == x) ++ib;
    x_prev = x;
  }
  return total;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ConfigError("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t ia = 0, ib = 0;
  double d = 0.0;
  while (ia < a.size() && ib < b.size()) {
    const double x = std::min(a[ia], b[ib]);
    while (ia < a.size() && a[ia] == x) ++ia;
    while (ib < b.size() && b[ib] == x) ++ib;
    d = std::max(d, std::abs(static_cast<double>(ia) / static_cast<double>(a.size()) -
                             static_cast<double>(ib) / static_cast<double>(b.size())));
  }
  return d;
}

double ks_critical_value(std::size_t n, std::size_t m, double alpha) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  return c * std::sqrt((nn + mm) / (nn * mm));
}

namespace {

// Split every chain into two halves.
std::vector<std::vector<double>> split_chains(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    if (half < 2) throw ConfigError("diagnostics need at least four draws per chain");
    out.emplace_back(c.begin(), c.begin() + static_cast<long>(half));
    out.emplace_back(c.end() - static_cast<long>(half), c.end());
  }
  return out;
}

// Replace draws by normal scores of their pooled fractional ranks.
std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& chains) {
  std::vector<std::pair<double, std::pair<std::size_t, std::size_t>>> pooled;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < chains[c].size(); ++i) pooled.push_back({chains[c][i], {c, i}});
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  const double s = static_cast<double>(pooled.size());
  boost::math::normal normal;
  std::vector<std::vector<double>> z(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) z[c].resize(chains[c].size());
  for (std::size_t k = 0; k < pooled.size();) {
    std::size_t end = k;
    while (end < pooled.size() && pooled[end].first == pooled[k].first) ++end;
    const double rank = 0.5 * static_cast<double>(k + 1 + end);  // average rank, 1-based
    const double score = boost::math::quantile(normal, (rank - 0.375) / (s + 0.25));
    for (std::size_t t = k; t < end; ++t) z[pooled[t].second.first][pooled[t].second.second] = score;
    k = end;
  }
  return z;
}

double basic_rhat(const std::vector<std::vector<double>>& chains) {
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    const double mu = std::accumulate(c.begin(), c.end(), 0.0) / n;
    double v = 0.0;
    for (double x : c) v += (x - mu) * (x - mu);
    means.push_back(mu);
    vars.push_back(v / (n - 1.0));
  }
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= n / (m - 1.0);
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / m;
  if (w == 0.0) return b == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double ess_of(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = std::accumulate(chains[c].begin(), chains[c].end(), 0.0) / static_cast<double>(n);
    double v = 0.0;
    for (double x : chains[c]) v += (x - means[c]) * (x - means[c]);
    vars[c] = v / static_cast<double>(n - 1);
  }
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(m);
  if (w == 0.0) return static_cast<double>(m * n);
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(m);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b = m > 1 ? b * static_cast<double>(n) / static_cast<double>(m - 1) : 0.0;
  const double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * w + b / static_cast<double>(n);

  auto autocov = [&](std::size_t c, std::size_t lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i)
      acc += (chains[c][i] - means[c]) * (chains[c][i + lag] - means[c]);
    return acc / static_cast<double>(n);
  };
  auto rho = [&](std::size_t lag) {
    double mean_acov = 0.0;
    for (std::size_t c = 0; c < m; ++c) mean_acov += autocov(c, lag);
    mean_acov /= static_cast<double>(m);
    return 1.0 - (w - mean_acov) / var_plus;
  };

  // Geyer's initial monotone positive sequence.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(m * n)));
  return static_cast<double>(m * n) / tau;
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw ConfigError("split_rhat: no chains");
  const auto split = split_chains(chains);
  const double bulk = basic_rhat(rank_normalize(split));
  // Folded draws |x - median| detect differences in scale.
  std::vector<double> all;
  for (const auto& c : split) all.insert(all.end(), c.begin(), c.end());
  const double med = quantile_unsorted(all, 0.5);
  auto folded = split;
  for (auto& c : folded)
    for (auto& x : c) x = std::abs(x - med);
  const double tail = basic_rhat(rank_normalize(folded));
  return std::max(bulk, tail);
}

double ess_bulk(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw ConfigError("ess_bulk: no chains");
  return ess_of(rank_normalize(split_chains(chains)));
}

}  // namespace stats
}  // namespace dsi
