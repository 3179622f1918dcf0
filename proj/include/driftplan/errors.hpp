#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace driftplan {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration, dimensions or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Input is well-formed but violates a structural constraint (duplicate keys,
// inconsistent grid extents, ...).
class SchemaError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  SolverError(int iteration, const std::string& what)
      : Error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

}  // namespace driftplan
