#pragma once

#include <stdexcept>
#include <string>

namespace dpgp {

// Malformed or inconsistent user input: data files, configs, kernel specs.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// A factorization or evaluation produced something non-finite or non-PD.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dpgp
