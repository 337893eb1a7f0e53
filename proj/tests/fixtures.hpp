#pragma once

#include <cstdint>

#include "mcpq/mdp.hpp"
#include "mcpq/random.hpp"

namespace mcpq::test {

inline DiscreteMDP one_state_mdp(double reward = 1.0, double gamma = 0.5) {
  return DiscreteMDP(1, 1, Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Ones(1, 1),
                     Eigen::VectorXd::Constant(1, reward), gamma);
}

/// Two states, one action, deterministic swap s -> 1 - s.
inline DiscreteMDP swap_mdp(Eigen::VectorXd initial, double gamma = 0.9) {
  Eigen::MatrixXd t(2, 2);
  t << 0, 1, 1, 0;
  Eigen::VectorXd r(2);
  r << 1.0, 0.0;
  return DiscreteMDP(2, 1, std::move(initial), t, r, gamma);
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).lpNorm<Eigen::Infinity>();
}

/// Random MDP plus a random policy, both derived from one seed.
struct Instance {
  DiscreteMDP mdp;
  TabularPolicy policy;
};

inline Instance seeded_instance(int states, int actions, std::uint64_t seed, double gamma = 0.9) {
  DiscreteMDP mdp = random_mdp(states, actions, gamma, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  TabularPolicy policy = random_tabular_policy(states, actions, rng);
  return {std::move(mdp), std::move(policy)};
}

}  // namespace mcpq::test
