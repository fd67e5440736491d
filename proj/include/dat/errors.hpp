#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dat {

/// Incompatible tensor shapes or configuration widths.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf produced or consumed, divergence, or a gradient-check breach.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad command line, config key or config value.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent on-disk data. `offset` is the byte offset of the
/// failure inside the offending file, or -1 when it does not apply.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what, std::int64_t offset = -1)
      : std::runtime_error(what), offset_(offset) {}

  std::int64_t offset() const noexcept { return offset_; }

 private:
  std::int64_t offset_;
};

}  // namespace dat
