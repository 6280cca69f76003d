#pragma once

#include <stdexcept>
#include <string>

namespace pfgpf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class EmptyParticleSet : public Error {
 public:
  EmptyParticleSet() : Error("particle set is empty") {}
};

class AllWeightsDegenerate : public Error {
 public:
  AllWeightsDegenerate() : Error("every log-weight is -inf or NaN") {}
};

class SingularFlowStep : public Error {
 public:
  using Error::Error;
};

class InvalidSchedule : public Error {
 public:
  using Error::Error;
};

class MissingCapability : public Error {
 public:
  using Error::Error;
};

class RateOverflow : public Error {
 public:
  using Error::Error;
};

class CardinalityMismatch : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace pfgpf
