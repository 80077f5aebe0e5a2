#pragma once

#include <stdexcept>
#include <string>

namespace retreg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

// Raised by the VE-NCC metric when a transform leaves too little overlap or
// when one operand is flat inside the overlap.
class MetricError : public Error {
 public:
  enum class Kind { InsufficientOverlap, ZeroVariance, ModalityMismatch };

  MetricError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// The landmark matcher found no admissible hypothesis.
class MatchFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace retreg
