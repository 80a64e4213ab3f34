#pragma once

#include <iosfwd>

namespace lung::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Parses argv and runs one subcommand. Normal output goes to `out`, usage
/// errors and runtime failures to `err`.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lung::cli
