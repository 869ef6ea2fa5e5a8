#pragma once

#include <stdexcept>
#include <string>

namespace rfs {

// Base class for all library errors so callers can catch one type.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : Error {
    using Error::Error;
};
struct LabelError : Error {
    using Error::Error;
};
struct ArgumentError : Error {
    using Error::Error;
};
struct NotPositiveDefiniteError : Error {
    using Error::Error;
};
struct InsufficientSampleError : Error {
    using Error::Error;
};
struct WriteOnceError : Error {
    using Error::Error;
};
struct LookupError : Error {
    using Error::Error;
};
struct CapacityError : Error {
    using Error::Error;
};
struct ProtocolError : Error {
    using Error::Error;
};
struct NanAbortError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& field, const std::string& msg)
        : Error("config field '" + field + "': " + msg), field_name(field) {}
    std::string field_name;
};

}  // namespace rfs
