#pragma once

// Command-line front end. Kept as a library so tests can drive it in-process.
//
// Exit codes: 0 ok, 1 verification failed, 2 usage or I/O error,
// 3 training diverged.

#include <ostream>
#include <string>
#include <vector>

namespace wseg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace wseg::cli
