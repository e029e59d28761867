#pragma once

#include <stdexcept>
#include <string>

namespace srl {

// Exit codes of the command-line tool map onto these categories:
// ArgumentError/ValidationError -> 2, NumericalError -> 3, IoError/ParseError -> 4.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by a caller-supplied value.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Configuration or file references rejected before any compute starts.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Operation requires state the object does not carry (e.g. missing scores).
class StateError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Least-squares system is rank deficient or too poorly conditioned.
class ProjectionError : public NumericalError {
 public:
  ProjectionError(const std::string& what, int deficient_degree)
      : NumericalError(what), deficient_degree_(deficient_degree) {}
  int deficient_degree() const { return deficient_degree_; }

 private:
  int deficient_degree_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file content. Carries the byte offset where parsing stopped.
class ParseError : public IoError {
 public:
  ParseError(const std::string& what, long long offset)
      : IoError(what), offset_(offset) {}
  long long offset() const { return offset_; }

 private:
  long long offset_;
};

}  // namespace srl
