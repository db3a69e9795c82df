#pragma once

#include <stdexcept>
#include <string>

namespace countex {

/// Operand shapes are incompatible. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid configuration (head count, prototype count, unknown config key...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unknown category id or parameter name.
class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// More instances requested than the scene grid can hold.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input file violates its schema. `pointer()` is a JSON pointer to the field.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string pointer, const std::string& message)
      : std::runtime_error(pointer + ": " + message), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

/// A file or directory could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loss term became NaN or infinite.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string term, long step, const std::string& message)
      : std::runtime_error(message), term_(std::move(term)), step_(step) {}
  const std::string& term() const { return term_; }
  long step() const { return step_; }

 private:
  std::string term_;
  long step_;
};

}  // namespace countex
