#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace shadowscope {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input bytes or text that do not follow the expected format. Carries the
/// offending record (binary) or line (text) when one can be named.
class MalformedInputError : public Error {
 public:
  explicit MalformedInputError(const std::string& what,
                               std::optional<std::size_t> location = {})
      : Error(location ? what + " (at " + std::to_string(*location) + ")"
                       : what),
        location_(location) {}

  std::optional<std::size_t> location() const { return location_; }

 private:
  std::optional<std::size_t> location_;
};

/// Geometry for which a shadow region cannot be formed (object taller than
/// the sensor, sensor inside the box, object wrapping around the sensor...).
class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

/// A value that violates a documented invariant of a parameter struct.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition on an operation's arguments.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Metric that is mathematically undefined for the given data, e.g. ROC AUC
/// on a single-class set.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace shadowscope
