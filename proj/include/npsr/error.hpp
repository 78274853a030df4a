#pragma once

#include <stdexcept>
#include <string>

namespace npsr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on shapes, ranges or parameters was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The numerics could not produce a meaningful answer (rank deficiency,
/// failed factorization, degenerate criterion).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input (CSV cell, config line). Carries the offending line.
class ParseError : public InvalidArgument {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : InvalidArgument(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace npsr
