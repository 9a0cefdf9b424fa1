#pragma once

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

namespace vperturb::cli {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitVerification = 4 };

// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

// Entry point; args excludes the program name. Commands: train, diagnose,
// bound, verify, compare.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vperturb::cli
