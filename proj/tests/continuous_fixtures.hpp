#pragma once

#include <cstdint>

#include "mcpq/continuous.hpp"
#include "mcpq/random.hpp"

namespace mcpq::test {

struct ContinuousInstance {
  LinearGaussianMDP model;
  GaussianPolicy policy;
  MixtureReward reward;
};

inline Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double lo, double hi) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.uniform(lo, hi);
  return m;
}

inline Eigen::MatrixXd random_diag(Rng& rng, int n, double lo, double hi) {
  return random_matrix(rng, n, 1, lo, hi).col(0).asDiagonal();
}

/// Random SPD matrix with eigenvalues roughly in [lo, hi + spread].
inline Eigen::MatrixXd random_spd(Rng& rng, int n, double lo, double hi) {
  const Eigen::MatrixXd g = random_matrix(rng, n, n, -0.3, 0.3);
  return random_diag(rng, n, lo, hi) + g * g.transpose();
}

/// Moderate, well-conditioned instance; the reward observes the full joint.
inline ContinuousInstance seeded_continuous(int ns, int na, std::uint64_t seed, int components = 1,
                                            double gamma = 0.9) {
  Rng rng(seed);
  const int d = ns + na;
  LinearGaussianMDP model(random_matrix(rng, ns, 1, -0.5, 0.5).col(0), random_spd(rng, ns, 0.3, 1.0),
                          random_matrix(rng, ns, ns, -0.6, 0.6), random_matrix(rng, ns, na, -0.8, 0.8),
                          random_spd(rng, ns, 0.2, 0.6), gamma);
  GaussianPolicy policy{random_matrix(rng, na, ns, -0.5, 0.5), random_matrix(rng, na, 1, -0.5, 0.5).col(0),
                        rng.uniform(0.4, 1.0)};
  MixtureReward reward;
  reward.projection = Eigen::MatrixXd::Identity(d, d);
  for (int j = 0; j < components; ++j)
    reward.components.push_back(
        {rng.uniform(0.5, 1.5), random_matrix(rng, d, 1, -1.0, 1.0).col(0), random_spd(rng, d, 0.8, 2.0)});
  return {std::move(model), std::move(policy), std::move(reward)};
}

/// n_s = n_a = 1 tracking task: reach state 1 with a velocity-like action.
inline ContinuousInstance tracking_1d() {
  LinearGaussianMDP model(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 0.1),
                          Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Constant(1, 1, 0.5),
                          Eigen::MatrixXd::Constant(1, 1, 0.05), 0.95);
  GaussianPolicy policy{Eigen::MatrixXd::Constant(1, 1, -0.2), Eigen::VectorXd::Constant(1, 0.1), 1.0};
  MixtureReward reward;
  reward.projection = Eigen::MatrixXd(1, 2);
  reward.projection << 1.0, 0.0;
  reward.components.push_back({1.0, Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Constant(1, 1, 0.3)});
  return {std::move(model), std::move(policy), std::move(reward)};
}

}  // namespace mcpq::test
