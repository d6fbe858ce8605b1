#pragma once

#include <stdexcept>
#include <string>

namespace dynlab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// evaluation outside the map's domain
struct DomainViolation : Error {
    using Error::Error;
};

// orbit left the escape disk / real domain
struct EscapeError : Error {
    EscapeError(const std::string& what, int step) : Error(what), escape_time(step) {}
    int escape_time;
};

struct NoConvergence : Error {
    using Error::Error;
};

struct PreconditionError : Error {
    using Error::Error;
};

// a lifted path came too close to a critical point to decide the branch
struct AmbiguityError : Error {
    using Error::Error;
};

struct DegeneratePair : Error {
    using Error::Error;
};

struct ContainmentError : Error {
    using Error::Error;
};

struct ConstructionFailure : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace dynlab
