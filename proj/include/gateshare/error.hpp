#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gateshare {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape or dimensionality violation. Message names the op and the
/// offending shapes.
class ShapeError : public Error {
 public:
  ShapeError(const std::string& op, const std::string& detail)
      : Error(op + ": " + detail) {}
};

/// Invalid configuration, bad file schema, or violated precondition.
/// CLI exit code 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Numerical divergence (NaN/Inf in a training loss). CLI exit code 3.
class NumericsError : public Error {
 public:
  explicit NumericsError(const std::string& msg) : Error(msg) {}
};

/// A required run artifact (file) is missing. CLI exit code 4.
class ArtifactError : public Error {
 public:
  explicit ArtifactError(const std::string& msg) : Error(msg) {}
};

inline std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace gateshare
