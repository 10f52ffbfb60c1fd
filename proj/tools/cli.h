#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "conic/core.h"

namespace conic::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitPairing = 2;
inline constexpr int kExitDegenerate = 3;

int exit_code_for(ErrorCode code);

// Runs conic-bench with argv-style arguments (args[0] is the program
// name). Reports go to `out` unless --out is given; diagnostics and
// progress go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace conic::cli
