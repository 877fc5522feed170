#pragma once

#include <stdexcept>
#include <string>

namespace pen {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit the operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed run configuration or corpus schema.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or missing input data (corpus lines, archives, checkpoints).
class DataError : public Error {
public:
    using Error::Error;
};

/// A loss or score became NaN/inf.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace pen
