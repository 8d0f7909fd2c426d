#pragma once

#include <stdexcept>
#include <string>

namespace entvec {

// Runtime failure in a pipeline stage; the CLI maps these to exit status 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

// Invalid configuration or arguments; the CLI maps these to exit status 2.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace entvec
