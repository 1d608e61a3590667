#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace sdeflow {

/// Raised when an integrator, sampler or optimizer produces non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, unknown benchmark or parameter, or a stale upstream artifact.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Upstream artifact does not match the current configuration.
class StaleArtifactError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace sdeflow
