#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmpoe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape disagreement between a vector/net and what an operation expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (from a config file, flag, or struct).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Manifest or sidecar parse failure. line() is 1-based, 0 when the failure
/// is not tied to a manifest line.
class ManifestError : public Error {
 public:
  ManifestError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Unsupported or damaged WAV input.
class AudioError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmpoe
