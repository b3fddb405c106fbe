#pragma once

#include <stdexcept>
#include <string>

namespace tende {

/// File could not be opened, read, or written.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// A NaN or infinity showed up where a finite value is required (e.g. a training loss).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tende
