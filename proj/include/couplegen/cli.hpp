#pragma once

#include <iosfwd>

namespace couplegen::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point for the `couplegen` tool: decompose | schedule | generate |
/// evaluate | optimize | sweep.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace couplegen::cli
