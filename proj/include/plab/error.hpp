#pragma once

#include <stdexcept>
#include <string>

namespace plab {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes, empty batches, malformed distributions.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Network, task or schedule descriptions that cannot be built.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Argument outside a function's supported domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, std::string where = {})
      : Error(where.empty() ? what : what + " (at " + where + ")"), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Rank metrics on an all-zero feature matrix.
class UndefinedRank : public Error {
 public:
  using Error::Error;
};

/// NaP projection of a weight matrix whose norm is zero.
class SingularProjection : public Error {
 public:
  using Error::Error;
};

/// Unreadable, corrupted or version-mismatched checkpoints.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Configuration rejected by load_config or plan validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace plab
