#pragma once

#include <stdexcept>
#include <string>

namespace henkf {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape mismatch or empty input where data is required.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Ensemble too small for the requested estimator (e.g. covariance with N < 2).
class DegenerateEnsembleError : public Error {
 public:
  using Error::Error;
};

// A matrix that must be solvable is (numerically) singular. The message names
// the offending matrix.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

// Parameter outside its admissible domain (e.g. nonpositive scale).
class ParameterDomainError : public Error {
 public:
  using Error::Error;
};

// Observed data outside the support of the assumed observation family.
class DataDomainError : public Error {
 public:
  using Error::Error;
};

// Iterative numerical routine failed to converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// State evolution produced non-finite values.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration (unknown model name, missing sampler,
// overlapping parameter blocks, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// All particle weights vanished.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; carries the offending location in the message.
class IngestionError : public Error {
 public:
  using Error::Error;
};

}  // namespace henkf
