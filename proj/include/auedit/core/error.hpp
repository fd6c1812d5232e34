#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace auedit {

enum class ErrorKind {
  io,
  format,
  version,
  truncated,
  dimension,
  invalid_argument,
  missing_artifact,
  numerical,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::version: return "version";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::missing_artifact: return "missing-artifact";
    case ErrorKind::numerical: return "numerical";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace auedit
