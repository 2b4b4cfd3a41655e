#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nextdit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Parses argv (program name first), runs one subcommand and returns the exit code. Artifacts
// go to --out; the one-line summary goes to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Appends "--key value" for every entry of the JSON config whose flag is absent from args.
// Uses the object under the subcommand name when present, otherwise the top-level object.
std::vector<std::string> merge_config(const std::vector<std::string>& args, const std::string& json_text);

}  // namespace nextdit::cli
