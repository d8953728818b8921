#include "dsi/transform.hpp"

#include "dsi/error.hpp"

#include <cmath>
#include <limits>

namespace dsi {

IncrementLogTransform::IncrementLogTransform(std::vector<Block> blocks, double delta, double scale, std::string unit)
    : blocks_(std::move(blocks)), delta_(delta), scale_(scale), unit_(std::move(unit)) {
  if (!(delta > 0.0)) throw ConfigError("increment_log: delta must be positive");
  if (!(scale > 0.0)) throw ConfigError("increment_log: scale must be positive");
  for (const auto& b : blocks_) {
    if (b.length < 1 || b.start < 0) throw ConfigError("increment_log: empty or negative block");
    if (b.anchor >= b.start || b.anchor < 0)
      throw ConfigError("increment_log: anchor must precede its block");
  }
}

IncrementLogTransform IncrementLogTransform::after_index(Eigen::Index n_wells, Eigen::Index n_times,
                                                         Eigen::Index first_transformed, double delta,
                                                         double scale, std::string unit) {
  if (first_transformed < 1 || first_transformed >= n_times)
    throw ConfigError("increment_log: need at least one untransformed and one transformed instant");
  std::vector<Block> blocks;
  for (Eigen::Index w = 0; w < n_wells; ++w) {
    const Eigen::Index base = w * n_times;
    blocks.push_back({base + first_transformed, n_times - first_transformed, base + first_transformed - 1});
  }
  return IncrementLogTransform(std::move(blocks), delta, scale, std::move(unit));
}

double IncrementLogTransform::max_increment(const Vector& x) const {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& b : blocks_) {
    if (b.start + b.length > x.size()) throw ConfigError("increment_log: vector too short");
    double prev = x(b.anchor);
    for (Eigen::Index k = b.start; k < b.start + b.length; ++k) {
      worst = std::max(worst, x(k) - prev);
      prev = x(k);
    }
  }
  return worst;
}

Vector IncrementLogTransform::forward(const Vector& x) const {
  Vector y = x;
  for (const auto& b : blocks_) {
    if (b.start + b.length > x.size()) throw ConfigError("increment_log: vector too short");
    double prev = x(b.anchor);
    for (Eigen::Index k = b.start; k < b.start + b.length; ++k) {
      const double arg = -(x(k) - prev) / scale_ + delta_;
      if (!(arg > 0.0))
        throw TransformDomainError("increment of " + std::to_string((x(k) - prev) / scale_) + " " + unit_ +
                                   " at coordinate " + std::to_string(k) + " reaches delta = " +
                                   std::to_string(delta_) + " " + unit_);
      y(k) = std::log(arg);
      prev = x(k);
    }
  }
  return y;
}

Vector IncrementLogTransform::inverse(const Vector& y) const {
  Vector x = y;
  for (const auto& b : blocks_) {
    if (b.start + b.length > y.size()) throw ConfigError("increment_log: vector too short");
    double prev = x(b.anchor);
    for (Eigen::Index k = b.start; k < b.start + b.length; ++k) {
      const double increment = scale_ * (delta_ - std::exp(y(k)));
      x(k) = prev + increment;
      prev = x(k);
    }
  }
  return x;
}

nlohmann::json IncrementLogTransform::metadata() const {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : blocks_) blocks.push_back({{"start", b.start}, {"length", b.length}, {"anchor", b.anchor}});
  return {{"name", name()}, {"delta", delta_}, {"unit", unit_}, {"scale", scale_}, {"blocks", blocks}};
}

Vector TransformChain::forward(const Vector& x) const {
  Vector y = x;
  for (const auto& t : parts_) y = t->forward(y);
  return y;
}

Vector TransformChain::inverse(const Vector& y) const {
  Vector x = y;
  for (auto it = parts_.rbegin(); it != parts_.rend(); ++it) x = (*it)->inverse(x);
  return x;
}

nlohmann::json TransformChain::metadata() const {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& t : parts_) parts.push_back(t->metadata());
  return {{"name", name()}, {"parts", parts}};
}

}  // namespace dsi
