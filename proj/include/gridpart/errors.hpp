#pragma once

#include <stdexcept>
#include <string>

namespace gridpart {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input text (CSV rows, numbers). Message carries the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally invalid input tables: duplicate ids, missing columns.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A row references an entity that does not exist.
class ReferenceError : public Error {
 public:
  using Error::Error;
};

// Misuse of model-building APIs: unregistered variables, bad degrees,
// degenerate constraint ranges, invalid parameters.
class ModelError : public Error {
 public:
  using Error::Error;
};

// Solver refused to run (size guards) or was configured inconsistently.
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace gridpart
