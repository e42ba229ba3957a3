#pragma once

#include <stdexcept>
#include <string>

namespace blood {

/// Base for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or layer shape mismatch.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An oracle-only operation (full Jacobian assembly) was asked to exceed its cap.
class OracleOnlyError : public Error {
public:
    using Error::Error;
};

/// Precondition on an argument value (rates, fractions, indices, labels).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated file content.
class CorruptFileError : public Error {
public:
    using Error::Error;
};

class FormatVersionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A computation produced a non-finite value or could not be carried out
/// (singular covariance, zero variance in a correlation).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A pipeline stage needs an artifact that an earlier command produces.
class MissingArtifactError : public Error {
public:
    using Error::Error;
};

}  // namespace blood
