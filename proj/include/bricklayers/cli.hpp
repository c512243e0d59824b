#ifndef BRICKLAYERS_CLI_HPP
#define BRICKLAYERS_CLI_HPP

#include <ostream>
#include <string>
#include <vector>

namespace bricklayers
{

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

inline constexpr const char* kOutputDirEnv = "BRICKLAYERS_OUTPUT_DIR";

/// Entry point of the command-line tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}

#endif
