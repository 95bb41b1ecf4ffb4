#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rinkkp {

// Runs one CLI command ("gen", "train", "eval", "ablate-sigma",
// "ablate-dropout"). Returns 0 on success, 1 on usage/config errors, 2 on
// runtime failures. Successful commands end with a single "OK <path>" line.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rinkkp
