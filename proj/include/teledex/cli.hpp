#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace teledex::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // validation failure
inline constexpr int kExitUsage = 2;    // usage or configuration error

/// Runs the `teledex` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace teledex::cli
