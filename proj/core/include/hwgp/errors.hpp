#pragma once

#include <stdexcept>
#include <string>

namespace hwgp {

// Thrown when a linear-algebra step cannot be completed (failed Cholesky
// after jitter escalation, unstable system passed to a Lyapunov solve, ...).
// Callers that must distinguish bad input from numerical trouble (the CLI
// maps this to exit code 2) catch it separately from std::invalid_argument.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hwgp
