#ifndef ADVREC_CLI_HPP
#define ADVREC_CLI_HPP

#include <iostream>

namespace advrec {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

// Entry point for `advrec train|evaluate|generate|diagnose`. Machine output
// (evaluate's JSON) goes to `out`, progress and errors to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
            std::ostream& err = std::cerr);

}  // namespace advrec

#endif  // ADVREC_CLI_HPP
