#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace carbonwatch {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Cumulative energy counter went backwards even after wraparound correction.
class CounterError : public Error {
 public:
  using Error::Error;
};

/// A device could not be read. `vanished()` distinguishes a device that
/// disappeared from a backend-wide failure.
class SampleError : public Error {
 public:
  SampleError(const std::string& what, bool vanished)
      : Error(what), vanished_(vanished) {}
  bool vanished() const noexcept { return vanished_; }

 private:
  bool vanished_;
};

/// An epoch could not be closed because no device produced a measurement.
class NoMeasurements : public Error {
 public:
  using Error::Error;
};

/// Network or protocol failure talking to an HTTP endpoint.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// A provider response could not be interpreted.
class ProviderError : public Error {
 public:
  using Error::Error;
};

/// Malformed session log. `line()` is 1-based.
class LogParseError : public Error {
 public:
  LogParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace carbonwatch
