#pragma once

#include <stdexcept>
#include <string>

namespace karl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Normal equations are numerically singular (no ridge to regularize them).
class SingularSystem : public Error {
 public:
  using Error::Error;
};

/// A simulated state left the finite reals.
class NonFiniteState : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class NotEquilibrium : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class ModelFormat : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace karl
