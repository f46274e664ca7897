#pragma once

#include <ostream>

namespace cavenet::cli {

// Parses arguments and runs one subcommand. Progress goes to `out`; failures
// print a single `error: <kind>: <message>` line to `err`. Returns the exit
// code: 0 on success, 1 for pipeline errors, 2 for usage errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cavenet::cli
