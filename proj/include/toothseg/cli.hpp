#pragma once

#include <string>
#include <vector>

namespace toothseg {

// Entry point behind the toothseg binary; exposed so tests can drive the
// commands in-process. Returns 0 on success, 2 on usage/input errors, 1 on
// runtime failures.
int run_command(const std::vector<std::string>& args);

}  // namespace toothseg
