#pragma once

#include <string>
#include <vector>

namespace pspd {

// Runs one CLI invocation (args excludes the program name). Returns 0 on
// success, 1 on a domain/runtime error, 2 on a usage error.
int run_cli(const std::vector<std::string>& args);

} // namespace pspd
