#pragma once

#include <stdexcept>
#include <string>

namespace tmdstat {

/// Base class for every error raised by the library. Callers that only care
/// about "something in the analysis failed" can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter lies outside its mathematical domain (negative mean, eta > 1, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Probability mass beyond the truncation bound exceeds the allowed tail.
class TruncationError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Histogram is empty or otherwise carries no information.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Non-uniform convolution matrix requested for too many bins.
class ComplexityError : public Error {
 public:
  using Error::Error;
};

/// Linear system too ill-conditioned to invert.
class ConditioningError : public Error {
 public:
  ConditioningError(const std::string& what, double condition_number)
      : Error(what), condition_number_(condition_number) {}
  double condition_number() const noexcept { return condition_number_; }

 private:
  double condition_number_;
};

/// An efficiency estimator has no real solution for the given statistics,
/// e.g. p(1|t=2) > 1/2 for the single-photon-loss relation.
class EstimatorDomainError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Malformed configuration. `pointer` is the JSON pointer of the offending field.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& pointer, const std::string& message)
      : Error(pointer + ": " + message), pointer_(pointer) {}
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace tmdstat
