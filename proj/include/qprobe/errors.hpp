#pragma once

#include <stdexcept>
#include <string>

namespace qprobe {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument, index, or dimension.
class ParameterError : public Error {
public:
  using Error::Error;
};

/// Linear-algebra failure (eigensolver, singular system, divergent approximant).
class NumericalError : public Error {
public:
  using Error::Error;
};

/// Rejection sampling could not produce a valid graph.
class EnsembleError : public Error {
public:
  using Error::Error;
};

/// Metric undefined for the given data (zero target in MAPE, constant vector in Pearson).
class MetricError : public Error {
public:
  using Error::Error;
};

/// Malformed dataset, model, or composition string.
class ParseError : public Error {
public:
  using Error::Error;
};

}  // namespace qprobe
