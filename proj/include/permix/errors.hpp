#ifndef PERMIX_ERRORS_HPP
#define PERMIX_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace permix {

// Bad user-facing input: malformed parameters, inconsistent dimensions,
// out-of-contract arguments. CLI maps this to exit code 2.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Structural limits exceeded: problem size beyond what the algorithm supports
// (e.g. exact permanents past the bit-mask width). CLI maps this to exit code 3.
class capacity_error : public std::runtime_error {
public:
    explicit capacity_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical machinery failed to deliver its accuracy contract: quadrature
// non-convergence, iteration limits, residual checks. CLI maps this to exit
// code 4. Divergent but well-defined quantities are NOT errors; they are
// reported as +infinity.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace permix

#endif
