#include "mcpq/chain.hpp"

#include <cmath>
#include <vector>

namespace mcpq {

DiscreteMDP make_chain(const ChainSpec& spec) {
  const int n = spec.length;
  if (n < 3) throw InputError("N", "chain length must be at least 3");
  const double gamma = spec.discount;
  if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("gamma", "chain discount must lie in (0, 1)");
  constexpr int na = 3;

  Eigen::MatrixXd transition = Eigen::MatrixXd::Zero(n * na, n);
  for (int s = 0; s < n; ++s) {
    transition(s * na + kLeft, std::max(s - 1, 0)) = 1.0;
    transition(s * na + kStay, s) = 1.0;
    transition(s * na + kRight, std::min(s + 1, n - 1)) = 1.0;
  }
  Eigen::VectorXd reward = Eigen::VectorXd::Zero(n * na);
  reward(0 * na + kStay) = 1.0 / gamma;
  reward((n - 1) * na + kStay) = 20.0 * std::pow(gamma, 2 - n);
  Eigen::VectorXd initial = Eigen::VectorXd::Zero(n);
  initial(1) = 1.0;
  return DiscreteMDP(n, na, std::move(initial), std::move(transition), std::move(reward), gamma);
}

TabularPolicy chain_left_policy(int length) {
  std::vector<int> actions(static_cast<std::size_t>(length), kLeft);
  actions.front() = kStay;
  return TabularPolicy::deterministic(3, actions);
}

TabularPolicy chain_right_policy(int length) {
  std::vector<int> actions(static_cast<std::size_t>(length), kRight);
  actions.back() = kStay;
  return TabularPolicy::deterministic(3, actions);
}

}  // namespace mcpq
