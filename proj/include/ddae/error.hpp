#pragma once

#include <stdexcept>
#include <string>

namespace ddae {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand dimensions do not conform.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// An argument lies outside the domain of the operation (probabilities, widths, counts).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A linear system could not be solved to the required residual.
class SingularError : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity appeared where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public NumericError {
public:
    using NumericError::NumericError;
};

// Dataset ingestion.
class FormatError : public Error {
public:
    using Error::Error;
};
class ParseError : public Error {
public:
    using Error::Error;
};
class RangeError : public Error {
public:
    using Error::Error;
};
class LengthError : public Error {
public:
    using Error::Error;
};
class ConsistencyError : public Error {
public:
    using Error::Error;
};
class SplitError : public Error {
public:
    using Error::Error;
};

// Model files.
class VersionError : public Error {
public:
    using Error::Error;
};
class CorruptionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// A failure inside one stage of the stacked pipeline; `stage()` is 1, 2 or 3.
class StageError : public Error {
public:
    StageError(int stage, const std::string& what)
        : Error("stage " + std::to_string(stage) + ": " + what), stage_(stage) {}
    int stage() const noexcept { return stage_; }

private:
    int stage_;
};

} // namespace ddae
