#pragma once

#include <stdexcept>
#include <string>

namespace ctxenc {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or other numeric breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Caller passed data that violates a precondition (empty corpus, empty document, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or download failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// File exists but its content is not in the expected format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// An API contract was violated (non-scalar loss, backward without a tape, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// A training run failed; carries the epoch/batch where it happened.
class RunError : public Error {
 public:
  RunError(const std::string& what, int epoch, int batch)
      : Error(what), epoch_(epoch), batch_(batch) {}

  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

}  // namespace ctxenc
