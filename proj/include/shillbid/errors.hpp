#pragma once

#include <stdexcept>
#include <string>

namespace shillbid {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Reverse hazard rate requested where F = 0 or F has an atom.
class UndefinedRateError : public DomainError {
 public:
  using DomainError::DomainError;
};

class InvalidDistributionError : public Error {
 public:
  using Error::Error;
};

class InstanceTooSmallError : public Error {
 public:
  using Error::Error;
};

class NotHardInstanceError : public Error {
 public:
  using Error::Error;
};

// Bid outside [0, 1], or feedback that does not match the policy's clock.
class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace shillbid
