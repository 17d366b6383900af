#pragma once

#include <string>
#include <vector>

namespace metatne {

// Entry point behind the metatne binary; exposed so tests can drive the
// subcommands in-process. Returns the process exit code:
//   0 ok, 1 runtime failure, 2 usage or IO error.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

// Re-checks every digest recorded in an out-directory manifest.
bool verify_manifest(const std::string& out_dir);

}  // namespace metatne
