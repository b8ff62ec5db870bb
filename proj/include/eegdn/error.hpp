#pragma once

#include <stdexcept>
#include <string>

namespace eegdn {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes disagree. `axis()` names the offending axis when known.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what, std::string axis = {})
      : Error(what), axis_(std::move(axis)) {}
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

/// Convolution/pooling geometry produces an empty or ill-defined output.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file, bad magic, unsupported version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Caller supplied data that violates an operation's precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for its arguments (zero power, zero variance).
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace eegdn
