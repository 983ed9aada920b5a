#pragma once

#include <stdexcept>
#include <string>

namespace thermrom {

class error : public std::runtime_error {
public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Bad user input: configuration values, contract preconditions. Exit code 2.
class validation_error : public error {
public:
    using error::error;
};

// Filesystem and serialization failures. Exit code 3.
class io_error : public error {
public:
    using error::error;
};

// Solver breakdown, singular systems, NaN propagation. Exit code 4.
class numeric_error : public error {
public:
    using error::error;
};

} // namespace thermrom
