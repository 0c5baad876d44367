#pragma once

#include <stdexcept>
#include <string>

namespace patchmil {

// Bad argument or malformed input data.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inconsistent model / run configuration, detected at build or load time.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File-level failures (unreadable image, bad checkpoint, write failure).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace patchmil
