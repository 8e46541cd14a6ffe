#pragma once

#include <stdexcept>
#include <string>

namespace objdisc {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition or invariant. The CLI maps these to exit code 2.
class ContractError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Empty masks, degenerate extents, points behind the camera.
class GeometryError : public ContractError {
 public:
  using ContractError::ContractError;
};

class NumericError : public ContractError {
 public:
  using ContractError::ContractError;
};

class InsufficientHistoryError : public ContractError {
 public:
  using ContractError::ContractError;
};

class GenerationError : public ContractError {
 public:
  using ContractError::ContractError;
};

// File system and decoding failures. The CLI maps these to exit code 1.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace objdisc
