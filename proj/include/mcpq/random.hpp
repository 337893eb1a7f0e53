#pragma once

#include <cstdint>
#include <random>

#include "mcpq/mdp.hpp"

namespace mcpq {

/// Seeded generator with platform-independent uniform draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) built from the top 53 bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform on (0, 1].
  double uniform_open_low() { return 1.0 - uniform(); }
  double normal();
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// One symmetric-Dirichlet(1) draw of the given size.
Eigen::VectorXd dirichlet_row(Rng& rng, int size);

TabularPolicy random_tabular_policy(int num_states, int num_actions, Rng& rng);

/// Dense random MDP: Dirichlet transition rows, uniform [0,1) rewards,
/// Dirichlet initial distribution.
DiscreteMDP random_mdp(int num_states, int num_actions, double discount, std::uint64_t seed);

}  // namespace mcpq
