#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace dpmlds {

/// Invalid configuration or arguments supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (time series files, observation
/// dimensions).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical failure inside inference: singular innovation covariance,
/// degenerate density, collapsed particle weights. Carries the offending time
/// index when one is known.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what,
                          std::optional<std::size_t> time = std::nullopt)
      : std::runtime_error(time ? what + " (t=" + std::to_string(*time) + ")"
                                : what),
        time_(time) {}

  std::optional<std::size_t> time() const noexcept { return time_; }

 private:
  std::optional<std::size_t> time_;
};

/// Density evaluation requested for a Gaussian whose covariance is singular
/// beyond the jitter budget (including the exact zero-covariance atom).
class DegenerateDensityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Every particle weight collapsed to zero.
class DegeneracyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace dpmlds
