#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace deitfake {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalidInput = 2;
inline constexpr int kExitIncompatible = 3;

// Entry point for the `deitfake` command. args excludes the program name.
// Normal output goes to out, diagnostics to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deitfake
