#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pairdis {

// Failure categories. Each is reported distinctly by the CLI error JSON.
enum class ErrorKind {
  invalid_argument,
  shape_error,
  contract_violation,
  magic_mismatch,
  truncated_file,
  count_mismatch,
  unsatisfiable_request,
  probe_failure,
  poisoned_gradient,
  non_finite,
  degenerate_clustering,
  io_error,
  config_error,
  unknown_command,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace pairdis
