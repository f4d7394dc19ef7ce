#pragma once

#include <stdexcept>
#include <string>

namespace vdlab {

/// Caller passed an out-of-range or malformed value.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// The operation is not supported by this environment or store kind
/// (e.g. exhaustive enumeration of a state space above the cap).
class CapabilityError : public std::runtime_error {
 public:
  explicit CapabilityError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A configuration file or config struct failed validation.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training produced non-finite values.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vdlab
