#pragma once

#include <stdexcept>
#include <string>

namespace a2 {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / dimension mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// API contract violations (non-scalar loss, tape misuse, bad preconditions).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid architecture / layer configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed files (weights, config documents, PPM/PGM).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid user input (datasets, CLI arguments, image sizes).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or numeric failures at runtime.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace a2
