#pragma once

#include <stdexcept>
#include <string>

namespace lustriage {

/// Malformed input text (label files, XML, JSON documents).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  /// 1-based line number, 0 when not line-oriented.
  int line() const { return line_; }

 private:
  int line_ = 0;
};

/// Well-formed input that violates a domain rule (bounds, uniqueness, ranges).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lustriage
