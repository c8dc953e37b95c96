#pragma once

#include <stdexcept>
#include <string>

namespace gci {

// Raised when a computation degenerates numerically (singular or badly
// conditioned innovation covariance, non-SPD inputs, failed convergence of an
// iterative solver). The CLI maps this to exit code 3; argument and data
// validation problems use std::invalid_argument and map to exit code 2.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gci
