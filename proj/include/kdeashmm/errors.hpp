#pragma once

#include <stdexcept>
#include <string>

namespace kdeas {

// Error taxonomy mirrored by the CLI exit codes: parse -> 1,
// invariant violation -> 2, numerical failure -> 3.

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

class InvariantError : public std::runtime_error {
 public:
  explicit InvariantError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace kdeas
