#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dfmkit {

// Command-line entry point (argv without the program name). Exit codes:
// 0 success, 2 config error, 3 numerical failure, 4 I/O error.
int run_cli(std::vector<std::string> args, std::ostream& out,
            std::ostream& err);

}  // namespace dfmkit
