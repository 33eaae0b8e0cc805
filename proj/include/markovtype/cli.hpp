#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace markovtype {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs `markovtyper <command> [flags]`; `args` excludes the program name.
/// Commands: gen-data, train, eval, report. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace markovtype
