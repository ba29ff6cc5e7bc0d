#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vidswap {

/// Runs the `vidswap` command line. Returns 0 on success, 1 on a user or
/// config error, 2 on a runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace vidswap
