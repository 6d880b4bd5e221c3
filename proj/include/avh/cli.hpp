#pragma once

#include <string>
#include <vector>

namespace avh {

// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

/// Parses argv (argv[0] is the program name), runs one subcommand and maps
/// failures to the exit codes above. Diagnostics go to stderr.
int run_cli(int argc, const char* const* argv);

/// Same, with the arguments after the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace avh
