#ifndef COSREG_ERRORS_HPP
#define COSREG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cosreg {

// Bad configuration or arguments (non-positive sizes, upgrade requests, ...).
class invalid_argument_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A location that does not belong to the study window.
class out_of_domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Overflow, NaN, or otherwise unusable floating-point values.
class numeric_range_error : public std::range_error {
 public:
  using std::range_error::range_error;
};

// Malformed input file; the message carries the offending line.
class parse_error : public std::runtime_error {
 public:
  parse_error(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Data that parses but is inconsistent with the requested model.
class validation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class calibration_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cosreg

#endif  // COSREG_ERRORS_HPP
