#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lpaf {

enum class ErrorKind {
  kInvalidArgument,
  kShapeMismatch,
  kNonFinite,
  kNotConverged,
  kConfig,
  kParse,
  kIo,
  kCheckpoint,
};

std::string_view to_string(ErrorKind kind);

// All library failures are reported through this exception. what() is a
// single line of the form "<kind>: <message>" so the CLI can forward it as-is.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

}  // namespace lpaf
