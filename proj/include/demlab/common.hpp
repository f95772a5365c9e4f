#pragma once

#include <stdexcept>
#include <string>

namespace demlab {

/// Raised on malformed or inconsistent input data (bad CSV, invalid flags,
/// violated preconditions that a caller can fix by supplying other input).
class input_error : public std::runtime_error {
 public:
  explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a computation degenerates at runtime (zero variances where a
/// ratio is needed, a moment fit with non-positive parameters, overflow).
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace demlab
