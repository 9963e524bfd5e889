#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmmna {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller violated a precondition (wrong arity, non-scalar loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or out-of-range configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared in a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content; carries the byte offset where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t offset, const std::string& what)
      : Error(file + ": offset " + std::to_string(offset) + ": " + what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace mmmna
