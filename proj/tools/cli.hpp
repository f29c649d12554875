#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fdnet::cli {

/// Runs one command line (args[0] is the program name). Machine-readable
/// results go to `out`, diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fdnet::cli
