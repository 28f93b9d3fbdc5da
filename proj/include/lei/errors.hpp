#pragma once

#include <stdexcept>
#include <string>

namespace lei {

/// Bad input: malformed config, schema mismatch, violated precondition.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure during fitting or training (non-finite loss etc.).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lei
