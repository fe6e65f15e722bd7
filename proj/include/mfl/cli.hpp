#pragma once

#include <iosfwd>

namespace mfl {

// Environment variable that, when set and non-empty, replaces the output
// directory of every subcommand.
inline constexpr const char* kOutputDirEnv = "MFL_OUTPUT_DIR";

// Entry point of the mflsim tool. Returns the process exit code:
// 0 ok, 1 usage/config error, 2 invariant or bound violation, 3 numerical failure.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mfl
