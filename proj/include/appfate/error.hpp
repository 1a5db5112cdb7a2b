#pragma once

#include <stdexcept>
#include <string>

namespace appfate {

// Bad input data or usage: malformed files, missing columns, width
// mismatches. The CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A trained-model precondition failed (single-class input, bad params).
class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace appfate
