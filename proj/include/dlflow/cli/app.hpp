#pragma once

#include <iosfwd>

namespace dlflow::cli {

/// Entry point of the dlflow command. Returns the process exit status;
/// errors are reported on `err`.
int run_app(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dlflow::cli
