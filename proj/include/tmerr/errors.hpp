#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tmerr {

/// Precondition on an argument was violated (dimension mismatch, empty input, ...).
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

/// Argument outside the mathematical domain of an operation (pole, box boundary).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// A computation produced a non-finite value. `index()` names the offending
/// component or optimizer step, depending on the thrower.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t index)
      : std::runtime_error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Invalid or degenerate configuration (bad field, degenerate noise, empty grid).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tmerr
