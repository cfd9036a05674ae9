#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace amrforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

/// Runs one amrforge command line. args[0] is the program name. Results go
/// to `out`, logs and the resolved configuration to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace amrforge::cli
