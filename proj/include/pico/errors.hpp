#pragma once

#include <stdexcept>
#include <string>

namespace pico {

// Violated precondition of an operation (bad arguments, misuse of the API).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Incompatible tensor shapes.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

class VocabularyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when bytes of the frozen system branch change. Never recoverable.
class FrozenBranchViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pico
