#pragma once

#include <iosfwd>

namespace cbctseg::cli {

// Exit codes: 0 success, 1 validation error or bad usage, 2 I/O error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cbctseg::cli
