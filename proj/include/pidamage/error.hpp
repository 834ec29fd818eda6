#pragma once

#include <stdexcept>
#include <string>

namespace pidamage {

// Precondition of a public operation was not met (bad dimensions, out-of-range
// arguments, calling backward on an empty tape, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, unreadable or malformed data files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient encountered during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const char* what) {
  if (!condition) [[unlikely]]
    throw ContractViolation(what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) [[unlikely]]
    throw ContractViolation(what);
}

}  // namespace pidamage
