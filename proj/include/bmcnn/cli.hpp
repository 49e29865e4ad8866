#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace bmcnn::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kDataError = 2, kNumericalError = 3 };

/// Parses and executes one subcommand. `args` excludes the program name. Results go to
/// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bmcnn::cli
