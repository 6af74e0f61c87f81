#pragma once

#include <stdexcept>
#include <string>

namespace paracap {

/// Input content violates a schema or invariant (CLI exit code 1).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written (CLI exit code 2).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace paracap
