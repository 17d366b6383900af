#pragma once

#include <stdexcept>
#include <string>

namespace metatne {

// Bad input: unreadable files, malformed lines, invalid configuration.
// The CLI maps this to exit code 2.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values encountered where the math requires finite ones.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// A metric is undefined for the given input (e.g. single-class AUC).
class MetricError : public std::runtime_error {
 public:
  explicit MetricError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace metatne
