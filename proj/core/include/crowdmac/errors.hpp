#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crowdmac {

// Invalid argument or inconsistent shape passed to an operation.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A coordinate or index outside its admissible domain.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// A mask plan with no visible or no masked tokens.
class DegenerateMaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Violated dataset invariant, e.g. duplicate (frame, agent) records.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Evaluation protocol misuse (no windows, unsupported task combination).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during optimization.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace crowdmac
