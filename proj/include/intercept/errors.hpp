#pragma once

#include <stdexcept>
#include <string>

namespace intercept {

/// No bounded-jerk trajectory reaches the goal within the limits.
struct InfeasibleError : std::runtime_error {
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

/// A root-finding or iteration step failed to converge. Never swallowed.
struct NumericFailureError : std::runtime_error {
  explicit NumericFailureError(const std::string& what) : std::runtime_error(what) {}
};

/// The projectile belief admits no valid plane crossing (|Vx| too small,
/// or the mean is already past the plane).
struct DegenerateCrossingError : std::runtime_error {
  explicit DegenerateCrossingError(const std::string& what) : std::runtime_error(what) {}
};

/// Tree construction produced no feasible expansion from the root.
struct EmptyTreeError : std::runtime_error {
  explicit EmptyTreeError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed configuration file or inconsistent parameter set.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace intercept
