#pragma once

#include <iosfwd>

namespace ssmae {

/// Entry point of the `ssmae` executable. Returns the process exit code:
/// 0 on success, 1 on runtime failure, 2 on usage errors. Failures print a single
/// `error: code=<code> message="<text>"` line to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ssmae
