#pragma once

#include <stdexcept>
#include <string>

namespace structrep {

/// Base class of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input, bad configuration or an unreadable file. The CLI maps it to exit code 1.
class InputError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or other numerical breakdown during computation. The CLI maps it to exit code 2.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace structrep
