#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace entvec {

// Entry point behind the entvec binary: prepare / train / query subcommands.
// Returns the process exit status: 0 on success, 1 on pipeline errors, 2 on
// argument or configuration errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace entvec
