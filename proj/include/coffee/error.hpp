#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coffee {

// Wire-level error taxonomy. Every failure surfaced by the library maps to
// exactly one of these; the service serializes the code verbatim.
enum class ErrorCode {
  invalid_request,
  not_found,
  upstream_model_error,
  sandbox_error,
  capacity,
};

std::string_view to_string(ErrorCode code);
int http_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Thrown by parsers that can point at a location in their input.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t offset)
      : Error(ErrorCode::invalid_request, message), offset_(offset) {}

  // Byte offset (or 1-based line number, for line-oriented parsers).
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace coffee
