#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lanmdp::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kDiverged = 3, kVerifyFailed = 4 };

/// Runs one command line (args excludes the program name) and returns its exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lanmdp::cli
