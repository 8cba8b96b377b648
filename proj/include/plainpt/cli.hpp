#pragma once

#include <iosfwd>

namespace plainpt {

// Exit codes: 0 success, 1 validation or runtime failure, 2 bad usage.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace plainpt
