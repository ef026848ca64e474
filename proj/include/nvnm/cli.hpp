#ifndef NVNM_CLI_HPP
#define NVNM_CLI_HPP

#include <string>
#include <vector>

namespace nvnm::cli {

// Entry point behind the nvnm binary; exposed so tests can drive commands
// in-process. args excludes the program name. Returns the process exit code:
// 0 success, 1 validation failure, 2 sampling failure, 3 I/O failure.
int run(const std::vector<std::string>& args);

}  // namespace nvnm::cli

#endif  // NVNM_CLI_HPP
