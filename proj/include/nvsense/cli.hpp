#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nvsense {

// Environment variable naming the directory that receives outputs when no
// --out is given. Without it, outputs go to the `out` stream.
inline constexpr const char* kOutputDirEnv = "NVSENSE_OUTPUT_DIR";

// Runs one CLI invocation (args[0] is the program name). Errors are reported
// as a single JSON object on `err`; the return value is the exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nvsense
