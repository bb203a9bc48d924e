#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nnqs {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input; `line` is 1-based (0 when not applicable).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  /// Same error with `context` (a file name) prepended to the message.
  ParseError(const std::string& context, const ParseError& inner)
      : Error(context + ": " + inner.what()), line_(inner.line()) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A numerical routine produced a non-finite value or failed to converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace nnqs
