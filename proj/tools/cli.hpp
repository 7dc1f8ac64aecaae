#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pmn {

/// Runs the `pmn` command line with `args` (without the program name).
/// Errors are reported on `err` as "pmn: <ErrorClass>: <message>".
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pmn
