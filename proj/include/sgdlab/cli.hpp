#ifndef SGDLAB_CLI_HPP
#define SGDLAB_CLI_HPP

#include <iosfwd>

namespace sgdlab {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitFailure = 3 };

/// Entry point for `sgdlab <subcommand> ...`; returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace sgdlab

#endif  // SGDLAB_CLI_HPP
