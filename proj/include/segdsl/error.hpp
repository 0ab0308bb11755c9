#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace segdsl {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument value (negative frequency, alpha outside [0,1], ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration (sample-rate mismatch, empty mel filter, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Mismatched dimensions between two inputs.
class SizeError : public Error {
 public:
  using Error::Error;
};

// Input shorter than the minimum a stage needs.
class TooShortError : public Error {
 public:
  TooShortError(const std::string& what, std::size_t required, std::size_t actual)
      : Error(what + " (need at least " + std::to_string(required) + ", got " +
              std::to_string(actual) + ")"),
        required_(required),
        actual_(actual) {}

  std::size_t required() const noexcept { return required_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t required_;
  std::size_t actual_;
};

// Malformed or missing data on disk, unlabeled utterances, empty inputs.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or parameters during optimization.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t batch_index)
      : Error(what + " at batch " + std::to_string(batch_index)), batch_index_(batch_index) {}

  std::size_t batch_index() const noexcept { return batch_index_; }

 private:
  std::size_t batch_index_;
};

}  // namespace segdsl
