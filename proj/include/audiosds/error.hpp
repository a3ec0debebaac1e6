#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace audiosds {

// Base of every error raised by the toolkit. The CLI maps subclasses onto
// exit codes (see app/run.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Malformed file contents. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Optimization produced non-finite parameters. Holds the last finite
// parameter set (one vector per optimized block) and the failing step.
class NumericAbort : public NumericError {
 public:
  NumericAbort(const std::string& what, std::size_t step, std::vector<std::vector<double>> last_good)
      : NumericError(what + " at step " + std::to_string(step)), step_(step), last_good_(std::move(last_good)) {}
  std::size_t step() const noexcept { return step_; }
  const std::vector<std::vector<double>>& last_good() const noexcept { return last_good_; }

 private:
  std::size_t step_;
  std::vector<std::vector<double>> last_good_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A backend was asked for something it does not implement (e.g. encoder VJP).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ClientError : public Error {
 public:
  ClientError(const std::string& what, int attempts)
      : Error(what + " after " + std::to_string(attempts) + " attempt(s)"), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

}  // namespace audiosds
