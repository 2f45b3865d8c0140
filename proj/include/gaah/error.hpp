#pragma once

#include <stdexcept>
#include <string>

namespace gaah {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments: out-of-range sizes, malformed strings, bad amplitudes.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input lies outside the mathematical domain of an operation
/// (wrong popcount, non-normalized distribution, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A numerical method failed to meet its contract.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A requested target cannot be realized with the given configuration.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Configuration validation failure; `field()` is the dotted path of the
/// offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace gaah
