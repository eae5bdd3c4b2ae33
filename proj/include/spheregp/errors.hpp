#pragma once

#include <stdexcept>
#include <string>

namespace spheregp {

/// Bad or inconsistent input data (files, coordinates, datasets, JSON).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failures of the numerical pipeline: non-PD matrices, failed fits,
/// kernels evaluated where they are undefined.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// The separable lon/lat kernel has no value when either point is a pole.
class UndefinedAtPole : public NumericalError {
 public:
  UndefinedAtPole() : NumericalError("covariance undefined at pole") {}
  explicit UndefinedAtPole(const std::string& where)
      : NumericalError("covariance undefined at pole (" + where + ")") {}
};

class FitFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace spheregp
