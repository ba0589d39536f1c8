#pragma once

#include <stdexcept>
#include <string>

namespace sgae {

/// Operand shapes do not fit the operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke a documented precondition (empty mean, non-scalar backward, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A NaN or Inf appeared in a tensor.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration values or unreadable config files. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or invalid corpus / reference data. CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint / model incompatibility. CLI exit code 4.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sgae
