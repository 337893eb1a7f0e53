#pragma once

// Exhaustive enumeration of the reward-weighted trajectory mixture. Used only
// as a ground-truth oracle on tiny instances.

#include <cstdint>
#include <vector>

#include "mcpq/mdp.hpp"

namespace mcpq {

inline constexpr std::uint64_t kDefaultEnumerationCap = 2'000'000;

struct BruteForceTable {
  int horizon = 0;
  double utility = 0.0;
  /// weight[t-1] = q(t), the mixture weight of component t.
  std::vector<double> weight;
  /// joint[t-1][tau-1](z) = q(z_tau = z, t), for tau <= t.
  std::vector<std::vector<StateActionVector>> joint;
  /// pair[t-1][tau-1](z, z') = q(z_tau = z, z_{tau+1} = z', t), for tau < t.
  std::vector<std::vector<Eigen::MatrixXd>> pair;
  /// unconditional[tau-1](z) = p(z_tau = z) under the trajectory distribution.
  std::vector<StateActionVector> unconditional;

  /// q(z_tau | t); throws when q(t) = 0.
  StateActionVector conditional(int tau, int t) const;
  /// sum_t sum_{tau<=t} q(z_tau = z, t).
  StateActionVector double_sum() const;
  /// sum_{t>=tau} q(z_tau = z, t).
  StateActionVector tail_sum(int tau) const;
};

/// Number of trajectory prefixes visited for horizon H: sum_t |Z|^t.
std::uint64_t enumeration_size(const DiscreteMDP& mdp, int horizon);

BruteForceTable brute_force_marginals(const DiscreteMDP& mdp, const TabularPolicy& policy,
                                      int horizon, std::uint64_t cap = kDefaultEnumerationCap);

}  // namespace mcpq
