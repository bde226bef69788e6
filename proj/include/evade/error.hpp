#pragma once

#include <stdexcept>
#include <string>

namespace evade {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration (CLI maps this to exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A mutation whose cap or precondition does not admit one more application.
class MutationError : public Error {
 public:
  using Error::Error;
};

}  // namespace evade
