#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace engage {

// Input-side failures (CLI exit code 2).
struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t line_no)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
  std::size_t line;
};

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyLogError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric failures (CLI exit code 3).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateAucError : NumericError {
  using NumericError::NumericError;
};

struct TrainError : NumericError {
  using NumericError::NumericError;
};

}  // namespace engage
