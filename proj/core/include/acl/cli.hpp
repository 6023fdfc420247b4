#pragma once

#include <string>
#include <vector>

namespace acl::cli {

// Command-line entry point (args exclude the program name). Subcommands:
// pretrain, run, baseline, ablate, eval, gen-data. Returns the process exit
// code: 0 success, 1 configuration error, 2 runtime assertion failure.
int run(const std::vector<std::string>& args);

}  // namespace acl::cli
