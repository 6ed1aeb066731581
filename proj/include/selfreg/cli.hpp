#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace selfreg {

// Entry point of the `selfreg` tool; args exclude the program name. Returns
// the process exit code. Errors print one line to `err`.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace selfreg
