#pragma once

#include <stdexcept>
#include <string>

namespace aid_dti {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition or type invariant.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// A file exists but its contents do not follow the expected layout.
class FormatError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// Unusable configuration (bad config file, singular design, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Numerical failure at runtime (non-convergence, divergence).
class NumericError : public Error {
public:
  using Error::Error;
};

} // namespace aid_dti
