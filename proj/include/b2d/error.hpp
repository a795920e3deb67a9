#pragma once

#include <stdexcept>
#include <string>

namespace b2d {

// Exception taxonomy. The CLI maps each category onto a fixed exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration or arguments (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

// Parse failure in a text format; carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-finite values or other numeric breakdown (exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace b2d
