#pragma once

#include <stdexcept>
#include <string>

namespace unpack {

/// Bad model directory, manifest, tensor shape or checksum. Maps to CLI exit code 3.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration supplied by the caller. Exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values or a broken numeric invariant. Exit code 4.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace unpack
