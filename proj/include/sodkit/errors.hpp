#pragma once

#include <stdexcept>
#include <string>

namespace sodkit {

// Shape and rank violations on tensors.
class DimensionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration, missing weights, unknown keys.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Dataset layout, pairing and decode failures, I/O errors.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Non-finite values during optimization.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition.
class ContractError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace sodkit
