#pragma once

#include "dsi/linalg.hpp"

#include <atomic>
#include <functional>
#include <memory>

namespace dsi {

/// Maps a parameter vector to an output vector. Implementations signal a
/// failed simulation by throwing SimulationError.
using VectorModel = std::function<Vector(const Vector&)>;

/// Wraps a model and counts evaluations; copies share the counter.
class CountingModel {
public:
  explicit CountingModel(VectorModel model)
      : model_(std::move(model)), count_(std::make_shared<std::atomic<long>>(0)) {}

  Vector operator()(const Vector& x) const {
    ++*count_;
    return model_(x);
  }
  long count() const { return count_->load(); }

private:
  VectorModel model_;
  std::shared_ptr<std::atomic<long>> count_;
};

}  // namespace dsi
