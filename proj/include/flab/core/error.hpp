#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flab {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration: shapes that do not chain, invalid options, schema violations.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, std::string path = {})
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// NaN/Inf produced by a computation. `layer` is the offending layer index when known.
class NumericError : public Error {
 public:
  static constexpr std::size_t kNoLayer = static_cast<std::size_t>(-1);

  explicit NumericError(const std::string& what, std::size_t layer = kNoLayer)
      : Error(layer == kNoLayer ? what : what + " (layer " + std::to_string(layer) + ")"),
        layer_(layer) {}
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

/// API misuse, e.g. a backward pass fed a cache from another forward call.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Input that makes a computation meaningless (all-zero weights, zero-variance kernel, empty memory).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or text input. `offset` is the byte offset where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::string path)
      : Error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace flab
