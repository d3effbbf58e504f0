// Error taxonomy shared across the library.
//
// DegenerateDesign: a matching problem with no valid solution (no treated
//   units, or more treated than controls for pair matching). Hypothesis-test
//   callers translate this into p = 1 rather than an error.
// SingularDesign:   a rank-deficient regression design.
// ParseError / ConfigError / IoError: input-surface failures.
// ContractError:    precondition violations (dimension mismatch etc).
#pragma once

#include <stdexcept>
#include <string>

namespace matchinf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : Error {
    using Error::Error;
};

struct DegenerateDesign : Error {
    using Error::Error;
};

struct SingularDesign : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace matchinf
