#ifndef FEDBAYES_CLI_HPP
#define FEDBAYES_CLI_HPP

#include <string>
#include <vector>

namespace fedbayes::cli {

// Exit codes: 0 success, 1 validation error (nothing written), 2 runtime
// divergence (INCOMPLETE sentinel written to the output directory).
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

} // namespace fedbayes::cli

#endif
