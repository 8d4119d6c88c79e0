#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace narrshift {

// Root of every pipeline error. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyStory : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

class ProgramError : public Error {
 public:
  using Error::Error;
};

class DegenerateStory : public Error {
 public:
  using Error::Error;
};

class RatingError : public Error {
 public:
  using Error::Error;
};

class ObservationError : public Error {
 public:
  using Error::Error;
};

class LearnError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Abduction found nothing to raise: the story already sits at the target.
class EmptyExplanation : public Error {
 public:
  using Error::Error;
};

class TransformError : public Error {
 public:
  using Error::Error;
};

class RejectedRewrite : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class IOError : public Error {
 public:
  using Error::Error;
};

class InvariantError : public Error {
 public:
  using Error::Error;
};

class GatewayError : public Error {
 public:
  GatewayError(std::string purpose, const std::string& cause, int attempts)
      : Error("gateway failure (" + purpose + ") after " + std::to_string(attempts) +
              " attempt(s): " + cause),
        purpose_(std::move(purpose)),
        attempts_(attempts) {}
  const std::string& purpose() const noexcept { return purpose_; }
  int attempts() const noexcept { return attempts_; }

 private:
  std::string purpose_;
  int attempts_;
};

class AuthError : public GatewayError {
 public:
  AuthError(std::string purpose, const std::string& cause, int attempts)
      : GatewayError(std::move(purpose), cause, attempts) {}
};

}  // namespace narrshift
