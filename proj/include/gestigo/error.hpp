// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gestigo {

/// Broad error category; the CLI maps these onto exit codes.
enum class ErrorKind {
  kArgument,
  kNotFound,
  kParse,
  kSchema,
  kRead,
  kShape,
  kGraph,
  kNumeric,
  kConfig,
  kTransport,
  kProtocol,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& m) : Error(ErrorKind::kArgument, m) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& m) : Error(ErrorKind::kNotFound, m) {}
};

/// Malformed input. Carries the offending file and 1-based line (0 when the
/// error is not tied to a line).
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& m);

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& m) : Error(ErrorKind::kSchema, m) {}
};

class ReadError : public Error {
 public:
  explicit ReadError(const std::string& m) : Error(ErrorKind::kRead, m) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& m) : Error(ErrorKind::kShape, m) {}
};

class GraphError : public Error {
 public:
  explicit GraphError(const std::string& m) : Error(ErrorKind::kGraph, m) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& m) : Error(ErrorKind::kNumeric, m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error(ErrorKind::kConfig, m) {}
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& m) : Error(ErrorKind::kTransport, m) {}
};

/// A peer sent a message that violates the wire protocol.
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& m) : Error(ErrorKind::kProtocol, m) {}
};

}  // namespace gestigo
