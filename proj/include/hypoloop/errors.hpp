#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hypoloop {

// Root of every error raised by the library. The CLI maps subclasses onto
// process exit codes (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input value or violated precondition on a pure function.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

// Manifest / dataset problems. Row numbers are 1-based data rows (header excluded).
class IngestError : public Error {
 public:
  IngestError(const std::string& what, std::vector<std::size_t> rows = {})
      : Error(what), rows_(std::move(rows)) {}
  const std::vector<std::size_t>& rows() const { return rows_; }

 private:
  std::vector<std::size_t> rows_;
};

// Statistical inference impossible (no residual degrees of freedom, undefined R^2 ...).
class InferenceError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class EndpointError : public Error {
 public:
  explicit EndpointError(const std::string& what, int status = 0)
      : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

// Fraction of missing VQA answers exceeded the configured ceiling.
class EmbeddingCeilingError : public Error {
 public:
  EmbeddingCeilingError(const std::string& what, double fraction, double ceiling)
      : Error(what), fraction_(fraction), ceiling_(ceiling) {}
  double fraction() const { return fraction_; }
  double ceiling() const { return ceiling_; }

 private:
  double fraction_;
  double ceiling_;
};

}  // namespace hypoloop
