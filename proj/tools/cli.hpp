#pragma once

#include <string>
#include <vector>

namespace structrep::tools {

/// Exit codes: 0 success, 1 validation or configuration error, 2 runtime or numerical error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one command line (args[0] is the program name). Never throws.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace structrep::tools
