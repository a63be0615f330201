#pragma once

#include <stdexcept>
#include <string>

namespace segapipe {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// FormatError/IoError -> 2, ShapeError -> 3, NumericalError -> 4.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class TruncationError : public FormatError {
public:
    using FormatError::FormatError;
};

class IoError : public Error {
public:
    using Error::Error;
};

class IndexError : public FormatError {
public:
    using FormatError::FormatError;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class TopologyError : public Error {
public:
    using Error::Error;
};

class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

}  // namespace segapipe
