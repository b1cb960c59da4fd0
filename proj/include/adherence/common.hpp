#pragma once

#include <stdexcept>
#include <string>

namespace adherence {

/// Raised when an input violates a documented precondition.
class InvalidInputError : public std::runtime_error {
 public:
  explicit InvalidInputError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a numerical routine cannot produce a valid result.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace adherence
