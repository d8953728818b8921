#pragma once

#include <stdexcept>
#include <string>

namespace dsi {

/// Invalid configuration or inputs that violate a documented precondition.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A forward simulation could not produce a usable state.
class SimulationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A factorisation or other numerical kernel failed.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace dsi
