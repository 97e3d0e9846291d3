#pragma once

#include <stdexcept>
#include <string>

namespace handtraj {

// Root of every error the library throws. The CLI maps subclasses onto exit
// codes, so each family below stays a distinct type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (bad records, schema drift).
class DataError : public Error {
 public:
  using Error::Error;
};

class SchemaMismatch : public DataError {
 public:
  using DataError::DataError;
};

class HorizonMismatch : public DataError {
 public:
  using DataError::DataError;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace handtraj
