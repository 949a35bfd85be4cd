#pragma once

#include <iosfwd>

namespace vqann::cli {

/// Runs the command line. Returns 0 on success, 1 on a runtime failure,
/// 2 on a usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vqann::cli
