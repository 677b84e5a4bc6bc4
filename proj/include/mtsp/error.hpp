#pragma once

#include <stdexcept>
#include <string>

namespace mtsp {

// Malformed input: bad shapes, infeasible (n, m), unparsable files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input is well-formed but exceeds an exhaustive-search size guard.
class SizeGuardError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Arithmetic breakdown: non-finite values, all-masked normalization slices.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mtsp
