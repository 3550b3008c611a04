#pragma once

#include <stdexcept>
#include <string>

namespace scm {

// Error taxonomy; the CLI maps each class onto a distinct exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid study configuration (bad windows, unknown units, schema problems).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data (CSV defects, missing series, corrupt cells).
class DataError : public Error {
public:
    using Error::Error;
};

// Estimation failures (degenerate fit problems, dimension mismatches).
class SolverError : public Error {
public:
    using Error::Error;
};

}  // namespace scm
