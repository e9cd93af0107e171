// SPDX-License-Identifier: Apache-2.0
#include "gestigo/error.hpp"

#include <utility>

namespace gestigo {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kArgument: return "argument";
    case ErrorKind::kNotFound: return "not-found";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kRead: return "read";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kGraph: return "graph";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kProtocol: return "protocol";
  }
  return "unknown";
}

namespace {
std::string format_parse(const std::string& file, std::size_t line, const std::string& m) {
  if (line == 0) return file + ": " + m;
  return file + ":" + std::to_string(line) + ": " + m;
}
}  // namespace

ParseError::ParseError(std::string file, std::size_t line, const std::string& m)
    : Error(ErrorKind::kParse, format_parse(file, line, m)), file_(std::move(file)), line_(line) {}

}  // namespace gestigo
