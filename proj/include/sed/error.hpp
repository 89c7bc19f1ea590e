#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sed {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf in losses, logits or gradients.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed binary or text input. `offset` is the byte offset (binary
// formats) or line number (CSV) where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sed
