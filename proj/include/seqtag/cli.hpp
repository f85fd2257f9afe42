#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace seqtag {

// Entry point behind the seqtag binary. Subcommands: corpus-stats,
// pretrain-lm, train, tag, evaluate. Returns the process exit code:
// 0 success, 2 input/config error, 3 numerical failure.
int run_command(const std::vector<std::string>& args,
                std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace seqtag
