#pragma once

#include <stdexcept>
#include <string>

namespace comicvox {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string file = {}, int line = 0)
      : Error(file.empty() ? what
                           : file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}
  [[nodiscard]] const std::string& file() const { return file_; }
  [[nodiscard]] int line() const { return line_; }

 private:
  std::string file_;
  int line_;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Adapter replied with the wrong arity, order, or shape.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Transport-level failure talking to an external process or endpoint.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace comicvox
