#pragma once

#include <stdexcept>
#include <string>

namespace dcc {

// All library errors derive from dcc::Error so callers can catch one type at
// the boundary (the CLI maps them onto exit codes).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
  using Error::Error;
};

class IndexError : public Error {
  using Error::Error;
};

// Sequence would exceed the model's positional capacity.
class CapacityError : public Error {
  using Error::Error;
};

// Caller broke a documented precondition (empty input, mismatched plan, ...).
class ContractError : public Error {
  using Error::Error;
};

class ParameterError : public Error {
  using Error::Error;
};

class FormatError : public Error {
  using Error::Error;
};

class IoError : public Error {
  using Error::Error;
};

// Training data with a single class.
class DegenerateDataError : public Error {
  using Error::Error;
};

// Metric is undefined for the given inputs (e.g. AUC with one class).
class UndefinedMetricError : public Error {
  using Error::Error;
};

class ConfigError : public Error {
  using Error::Error;
};

}  // namespace dcc
