#pragma once

#include <stdexcept>
#include <string>

namespace scalseg {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed data: bad files, out-of-range indices, non-finite coordinates.
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or inconsistent model/config combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A contract of the library was violated at runtime (e.g. backward without a
// recorded forward pass, updating a frozen model).
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace scalseg
