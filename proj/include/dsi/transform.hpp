#pragma once

#include "dsi/linalg.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace dsi {

/// Thrown when a vector lies outside a transform's domain.
class TransformDomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invertible map on data or prediction vectors.
class Transform {
public:
  virtual ~Transform() = default;
  virtual std::string name() const = 0;
  virtual Vector forward(const Vector& x) const = 0;
  virtual Vector inverse(const Vector& y) const = 0;
  /// Parameters and the coordinates the transform touches.
  virtual nlohmann::json metadata() const = 0;
};

/// Replaces each coordinate in a block by ln(-dp/scale + delta), where dp is
/// its increment over the preceding coordinate and `scale` converts to the
/// working unit of delta. The inverse rebuilds absolute values by cumulative
/// summation from the untouched anchor, so no reconstructed increment can
/// reach delta.
class IncrementLogTransform final : public Transform {
public:
  struct Block {
    Eigen::Index start{0};   ///< first transformed coordinate
    Eigen::Index length{0};
    Eigen::Index anchor{0};  ///< untouched coordinate preceding the block
  };

  IncrementLogTransform(std::vector<Block> blocks, double delta, double scale, std::string unit = "MPa");

  /// Well-major layout of n_wells series of n_times values; time indices
  /// >= first_transformed are transformed, anchored at the previous instant.
  static IncrementLogTransform after_index(Eigen::Index n_wells, Eigen::Index n_times,
                                           Eigen::Index first_transformed, double delta, double scale,
                                           std::string unit = "MPa");

  std::string name() const override { return "increment_log"; }
  Vector forward(const Vector& x) const override;
  Vector inverse(const Vector& y) const override;
  nlohmann::json metadata() const override;

  double delta() const { return delta_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  /// Largest increment dp (in x units) over the transformed coordinates.
  double max_increment(const Vector& x) const;

private:
  std::vector<Block> blocks_;
  double delta_;
  double scale_;
  std::string unit_;
};

/// Applies transforms in order; the inverse runs them in reverse.
class TransformChain final : public Transform {
public:
  TransformChain() = default;
  explicit TransformChain(std::vector<std::shared_ptr<const Transform>> parts) : parts_(std::move(parts)) {}

  bool empty() const { return parts_.empty(); }
  std::string name() const override { return "chain"; }
  Vector forward(const Vector& x) const override;
  Vector inverse(const Vector& y) const override;
  nlohmann::json metadata() const override;

private:
  std::vector<std::shared_ptr<const Transform>> parts_;
};

}  // namespace dsi
