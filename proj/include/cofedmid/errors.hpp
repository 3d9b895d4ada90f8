#pragma once

#include <stdexcept>
#include <string>

namespace cofedmid {

// Violated precondition: bad dimensions, out-of-range arguments, infeasible
// requests.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void Require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

}  // namespace cofedmid
