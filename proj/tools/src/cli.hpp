#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lupa::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kDiverged = 2,
  kCheckFailed = 3,
};

/// Entry point without the program name. Subcommands: run, sweep, speedup,
/// theory-check, adaptive-compare, minibatch-divergence.
int main(const std::vector<std::string>& args, std::ostream& out,
         std::ostream& err);

}  // namespace lupa::cli
