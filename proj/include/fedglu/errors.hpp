#pragma once

#include <stdexcept>
#include <string>

namespace fedglu {

/// Root of every error the library raises. The CLI maps the three
/// families below onto its exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Problems with input data or its shape (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Failures while computing (exit code 4).
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t row, const std::string& reason)
      : DataError("row " + std::to_string(row) + ": " + reason), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class NonMonotonicTimestamps : public DataError {
 public:
  using DataError::DataError;
};

class SeriesTooShort : public DataError {
 public:
  using DataError::DataError;
};

class InfeasibleSpec : public DataError {
 public:
  using DataError::DataError;
};

class EmptyDataset : public DataError {
 public:
  using DataError::DataError;
};

class MissingArtifacts : public DataError {
 public:
  using DataError::DataError;
};

/// A run directory whose files no longer match the manifest hashes.
class VerificationFailed : public DataError {
 public:
  using DataError::DataError;
};

class DimensionMismatch : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class StaleCache : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class NonFiniteGradient : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class NonFiniteParameter : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class EmptyBatch : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class NoClients : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class ShapeMismatch : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class EmptySet : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class EmptyCohort : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class DegenerateVariance : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class TooFewPatients : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace fedglu
