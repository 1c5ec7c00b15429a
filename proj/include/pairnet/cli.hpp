#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pairnet {

/// Exit codes of the `pairnet` binary.
enum ExitCode : int {
  kExitOk = 0,
  kExitRuntime = 1,
  kExitUsage = 2,
  kExitConfig = 3,
};

/// Runs one `pairnet` invocation; args[0] is the program name. Errors are
/// reported on `err` as a single line "pairnet: error[<class>]: <message>".
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pairnet
