#pragma once

#include <ostream>

namespace coaug::cli {

/// Entry point of the `coaug` tool. Returns the process exit status: 0 when every requested
/// artifact was written, 1 on runtime failure, 2 on usage or config errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace coaug::cli
