#pragma once

// Double reward chain: N states in a line, actions left/stay/right,
// deterministic moves (moving off an end leaves the agent in place). Staying
// at either end is rewarded; the rewards are scaled so that going left is
// worth 20 and going right 400 for every N.

#include "mcpq/mdp.hpp"

namespace mcpq {

enum ChainAction : int { kLeft = 0, kStay = 1, kRight = 2 };

struct ChainSpec {
  int length = 3;
  double discount = 0.95;
};

/// Starts in the state adjacent to the left end (index 1).
DiscreteMDP make_chain(const ChainSpec& spec);

/// Move left everywhere, stay at the left end.
TabularPolicy chain_left_policy(int length);
/// Move right everywhere, stay at the right end.
TabularPolicy chain_right_policy(int length);

}  // namespace mcpq
