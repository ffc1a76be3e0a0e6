#pragma once

#include <iosfwd>

namespace hq {

/// Command-line entry point. Returns 0 on success, 2 on usage errors and 1
/// on runtime failures.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace hq
