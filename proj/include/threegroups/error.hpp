#pragma once

#include <stdexcept>
#include <string>

namespace threegroups {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data or configuration violates a documented contract.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// The sampler reached a state it cannot continue from (e.g. a non-finite
/// initial log-posterior).
class RuntimeAbort : public Error {
public:
    using Error::Error;
};

}  // namespace threegroups
