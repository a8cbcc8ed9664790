#pragma once

#include <stdexcept>
#include <string>

namespace spev {

// Shape, parameter or semantic check failed. The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed file contents or an I/O failure. The CLI maps this to exit code 2.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace spev
