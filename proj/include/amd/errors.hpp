#pragma once

#include <stdexcept>
#include <string>

namespace amd {

// User-caused errors (bad flags, malformed configs/inputs). The CLI maps
// these to exit code 1; everything else derived from std::exception is a
// runtime error and maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace amd
