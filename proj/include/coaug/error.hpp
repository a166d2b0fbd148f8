#pragma once

#include <stdexcept>
#include <string>

namespace coaug {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or missing input files.
class IngestionError : public Error {
public:
    using Error::Error;
};

/// Cross-reference checks failed (dangling ids, duplicate ids).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or synthetic-corpus parameters. `field()` names the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class BuildError : public Error {
public:
    using Error::Error;
};

/// An operation was applied to the wrong index variant (sparse vs dense).
class VariantError : public Error {
public:
    using Error::Error;
};

class SamplingError : public Error {
public:
    using Error::Error;
};

class LookupError : public Error {
public:
    using Error::Error;
};

/// Exhaustive enumeration refused because it would exceed the configured cap.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Non-finite values appeared during an update.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace coaug
