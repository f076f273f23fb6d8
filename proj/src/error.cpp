#include "pairdis/error.hpp"

namespace pairdis {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::shape_error: return "shape-error";
    case ErrorKind::contract_violation: return "contract-violation";
    case ErrorKind::magic_mismatch: return "magic-mismatch";
    case ErrorKind::truncated_file: return "truncated-file";
    case ErrorKind::count_mismatch: return "count-mismatch";
    case ErrorKind::unsatisfiable_request: return "unsatisfiable-request";
    case ErrorKind::probe_failure: return "probe-failure";
    case ErrorKind::poisoned_gradient: return "poisoned-gradient";
    case ErrorKind::non_finite: return "non-finite";
    case ErrorKind::degenerate_clustering: return "degenerate-clustering";
    case ErrorKind::io_error: return "io-error";
    case ErrorKind::config_error: return "config-error";
    case ErrorKind::unknown_command: return "unknown-command";
  }
  return "unknown";
}

}  // namespace pairdis
