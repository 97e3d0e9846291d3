#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace handtraj::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kRuntime = 3 };

// Parses `args` (without the program name) and runs one subcommand:
// build-gt, make-dataset, train, predict, eval, baseline, plot.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace handtraj::cli
