#pragma once

#include <stdexcept>
#include <string>

namespace markovtype {

// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration value (K > A, tau outside (0, 1], ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A structural invariant was violated (repeated symbol in a query, ...).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Reading a dataset or checkpoint failed. The message names the field or file.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace markovtype
