#pragma once

#include <ostream>

namespace onsd {

/// Entry point of the `onsd` tool. Returns 0 on success and 2 on usage or
/// data errors; messages go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace onsd
