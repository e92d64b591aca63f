#pragma once

#include <stdexcept>
#include <string>

namespace kiresh {

// Base of every library failure. Verdict-style results (label validation,
// 0/0 metric ratios) are never reported through exceptions.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class EncodingError : public Error {
public:
  using Error::Error;
};

// Caller broke an operation's precondition (shape mismatch, reveal on a
// non-prompt model, ...).
class ContractError : public Error {
public:
  using Error::Error;
};

class InputError : public Error {
public:
  using Error::Error;
};

}  // namespace kiresh
