#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace agentpomdp::cli {

/// Exit codes returned by `run`.
enum ExitCode : int {
    kOk = 0,
    kFailure = 1,     ///< unexpected internal error
    kInvalid = 2,     ///< bad arguments, missing file, parse or validation error
    kCapacity = 3,    ///< an enumeration exceeded its cap
};

/// Runs one command line (args[0] is the program name). Output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace agentpomdp::cli
