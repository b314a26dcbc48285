#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cqr::cli {

/// Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Runs one command. `args` excludes the program name. Results go to `out`
/// (or the --out file), diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cqr::cli
