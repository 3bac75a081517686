// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fairprep {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix or parameter dimensions do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation was called in the wrong object state (e.g. backward without forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// A scalar hyperparameter or argument is outside its domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (bad joint table, schema mismatch, empty arrays).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the given data (single class, empty stratum).
class MetricError : public Error {
 public:
  using Error::Error;
};

/// CSV / schema ingestion failure; the message carries row and column.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// A downstream model cannot be fitted on the given labels.
class FitError : public Error {
 public:
  using Error::Error;
};

/// Training diverged; the message holds a snapshot of the offending iteration.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace fairprep
