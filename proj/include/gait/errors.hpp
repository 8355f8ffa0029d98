#pragma once

#include <stdexcept>
#include <string>

namespace gait {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidPhaseCode : Error {
    explicit InvalidPhaseCode(int code)
        : Error("invalid gait phase code: " + std::to_string(code)) {}
};

struct DegenerateOrientation : Error {
    DegenerateOrientation() : Error("quaternion norm too small to normalize") {}
};

struct DegenerateChannel : Error {
    explicit DegenerateChannel(int channel)
        : Error("zero-variance channel " + std::to_string(channel) +
                " cannot be standardized") {}
};

struct ShapeError : Error {
    using Error::Error;
};

struct LengthError : Error {
    using Error::Error;
};

struct MissingClass : Error {
    using Error::Error;
};

struct InsufficientData : Error {
    using Error::Error;
};

struct SessionTooShort : Error {
    using Error::Error;
};

struct InvalidAttempt : Error {
    using Error::Error;
};

struct VersionMismatch : Error {
    using Error::Error;
};

struct CorruptFile : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

} // namespace gait
