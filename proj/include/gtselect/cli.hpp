#pragma once

#include <ostream>

namespace gtselect {

// Entry point of the `gtselect` tool. Returns 0 on success, 1 on usage errors
// (synopsis written to `err`) and 2 on runtime errors.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gtselect
