#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pairdis {

// Runs one subcommand; `args` excludes the program name. Results go to
// `out` as JSON, failures to `err` as {"error": {"kind", "message"}}.
// Returns the process exit code.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pairdis
