#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "coffee/error.hpp"

namespace coffee {

// Exit codes: 0 success, 2 usage, otherwise one per error category.
int exit_code_for(ErrorCode code);

// Entry point of the `coffee` tool; args excludes the program name.
// Primary output goes to `out` (or --output), diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace coffee
