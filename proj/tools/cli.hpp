#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace floodcast::cli {

// Dispatches one subcommand invocation (argv without the program name).
// Returns the process exit code; failures print one machine-readable JSON
// object per error on `err`.
int run_command(const std::vector<std::string>& argv, std::ostream& out = std::cout,
                std::ostream& err = std::cerr);

}  // namespace floodcast::cli
