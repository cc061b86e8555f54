#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace windgen {

/// Library version string.
const char* version() noexcept;

/// Runs one command line (args[0] is the program name). Errors go to `err`
/// as a single JSON line; returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace windgen
