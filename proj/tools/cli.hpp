#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tmdstat::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitWarning = 1,  ///< inconsistency or negativity warnings under --strict
  kExitUsage = 2,    ///< bad arguments, invalid config, domain errors
};

/// Entry point behind the `tmdstat` executable. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tmdstat::cli
