#pragma once

#include <stdexcept>
#include <string>

namespace fedgsp {

/// Invalid user-supplied configuration (bad field value, infeasible task shape).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training diverged: a loss or gradient became non-finite.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Broken internal invariant; indicates a bug rather than bad input.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace fedgsp
