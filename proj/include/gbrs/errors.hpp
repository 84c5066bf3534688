#pragma once

#include <stdexcept>
#include <string>

namespace gbrs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes do not line up (message names the offending axis).
class DimensionError : public Error {
  public:
    using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
  public:
    using Error::Error;
};

/// Invalid user-supplied data (out-of-bounds click, bad label, ...).
class InputError : public Error {
  public:
    using Error::Error;
};

/// Operation not available for the session's task or parameterization.
class ModeError : public Error {
  public:
    using Error::Error;
};

/// Malformed, truncated or mismatched checkpoint / snapshot.
class LoadError : public Error {
  public:
    using Error::Error;
};

/// Non-finite loss or value encountered during optimization.
class NumericError : public Error {
  public:
    using Error::Error;
};

class TrainingError : public Error {
  public:
    using Error::Error;
};

} // namespace gbrs
