#pragma once

#include <stdexcept>
#include <string>

namespace gatt {

/// Raised for contract violations: bad shapes, unsupported groups, malformed files.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a configuration file or command line cannot be interpreted.
class ConfigError : public Error {
 public:
  using Error::Error;
};

#define GATT_CHECK(cond, msg)                  \
  do {                                         \
    if (!(cond)) throw ::gatt::Error(msg);     \
  } while (0)

}  // namespace gatt
