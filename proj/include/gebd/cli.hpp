#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gebd {

// Full command-line surface (args excludes the program name). Subcommands:
// gen, train-local, featurize, train-decoder, infer, eval, run-all.
// Returns 0 on success, 1 on usage/validation errors, 2 on runtime failures.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);
int run_cli(std::vector<std::string> args); // stdout / stderr

} // namespace gebd
