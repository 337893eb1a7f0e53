#pragma once

// Command-line front end. Exit codes:
//   0  success
//   1  input error (bad flags, malformed or invalid JSON, failed run)
//   2  budget exhausted (iteration or time limit hit before convergence)
//   3  verification failure

#include <iosfwd>
#include <string>
#include <vector>

namespace mcpq {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitBudget = 2;
inline constexpr int kExitVerify = 3;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses "3..10", "3,5,8" or "7".
std::vector<int> parse_int_range(const std::string& text, const std::string& field);

}  // namespace mcpq
