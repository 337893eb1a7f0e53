#include "mcpq/random.hpp"

#include <cmath>
#include <numbers>

namespace mcpq {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open_low();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

Eigen::VectorXd dirichlet_row(Rng& rng, int size) {
  Eigen::VectorXd row(size);
  for (int i = 0; i < size; ++i) row(i) = -std::log(rng.uniform_open_low());
  row /= row.sum();
  return row;
}

TabularPolicy random_tabular_policy(int num_states, int num_actions, Rng& rng) {
  Eigen::MatrixXd table(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) table.row(s) = dirichlet_row(rng, num_actions).transpose();
  return TabularPolicy(std::move(table));
}

DiscreteMDP random_mdp(int num_states, int num_actions, double discount, std::uint64_t seed) {
  Rng rng(seed);
  const int pairs = num_states * num_actions;
  Eigen::MatrixXd transition(pairs, num_states);
  for (int z = 0; z < pairs; ++z) transition.row(z) = dirichlet_row(rng, num_states).transpose();
  Eigen::VectorXd reward(pairs);
  for (int z = 0; z < pairs; ++z) reward(z) = rng.uniform();
  Eigen::VectorXd initial = dirichlet_row(rng, num_states);
  return DiscreteMDP(num_states, num_actions, std::move(initial), std::move(transition), std::move(reward),
                     discount);
}

}  // namespace mcpq
