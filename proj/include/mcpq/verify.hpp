#pragma once

// Built-in oracle checks run by `mcpq verify`: inference backends against
// brute force and each other, gradients against finite differences, and the
// continuous moment recursion against quadrature.

#include <optional>
#include <string>
#include <vector>

namespace mcpq {

struct VerificationCheck {
  std::string fixture;
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Fixture names accepted by run_verification.
std::vector<std::string> verification_fixtures();

/// Runs every fixture, or only `fixture` when given. `tolerance` replaces
/// each check's default tolerance. Throws InputError for an unknown fixture.
std::vector<VerificationCheck> run_verification(const std::optional<std::string>& fixture = std::nullopt,
                                                std::optional<double> tolerance = std::nullopt);

}  // namespace mcpq
