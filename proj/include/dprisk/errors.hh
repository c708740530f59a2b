#pragma once

#include <stdexcept>
#include <string>

namespace dprisk {

// Malformed or inconsistent user input (bad labels, missing files, bad
// parameters). Maps to CLI exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input is well formed but the requested quantity is undefined on it, e.g. a
// table without sample uniques. Exit code 3.
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite state, failed factorization, overflow. Exit code 4.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dprisk
