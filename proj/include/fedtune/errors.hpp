#pragma once

#include <stdexcept>
#include <string>

namespace fedtune {

// Base class for all errors raised by the simulator. The CLI maps subclasses
// to process exit codes; library code throws and never exits.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration, malformed spec file, or violated call contract. Exit code 1.
class SpecError : public Error {
 public:
  explicit SpecError(const std::string& what) : Error(what) {}
};

// A tuner asked for more training rounds than the round budget allows. Exit code 2.
class BudgetExhausted : public Error {
 public:
  explicit BudgetExhausted(const std::string& what) : Error(what) {}
};

// More privatized queries were issued than the privacy budget was split across. Exit code 2.
class PrivacyBudgetExhausted : public BudgetExhausted {
 public:
  explicit PrivacyBudgetExhausted(const std::string& what) : BudgetExhausted(what) {}
};

// Filesystem failure while reading or writing artifacts. Exit code 3.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace fedtune
