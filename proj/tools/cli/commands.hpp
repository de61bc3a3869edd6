#pragma once

#include <iosfwd>

namespace devsurv::cli {

/// Exit statuses shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitInvalidConfig = 3,
  kExitMissingInput = 4,
  kExitParse = 5,
  kExitLocked = 6,
  kExitNumerical = 7,
  kExitInvalidData = 8,
};

/// Parses argv, runs one subcommand and returns its exit status. Summaries go
/// to `out`; warnings and the error JSON go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace devsurv::cli
