#pragma once

#include <iosfwd>

namespace tdadur::cli {

// Exit codes: 0 success, 1 runtime error, 2 usage error, 3 finished with
// per-record failures (outputs are still written).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tdadur::cli
