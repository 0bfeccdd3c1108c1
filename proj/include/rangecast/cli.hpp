#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rangecast::cli {

// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumeric = 3;

// Runs one CLI invocation. `args` excludes the program name. Errors emit a
// machine-readable JSON object on `err` and map to the exit codes above.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace rangecast::cli
