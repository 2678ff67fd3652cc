#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pidon::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_config = 2,     ///< bad configuration or I/O failure
  exit_numeric = 3,    ///< divergence (non-finite loss or cost)
  exit_mismatch = 4,   ///< checkpoint / dataset does not fit the configuration
};

/// Entry point of the `pidon` tool; `args` excludes the program name.
/// Errors are reported on `err` and mapped to an ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pidon::cli
