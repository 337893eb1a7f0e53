#pragma once

// Reference computations that share no code with the inference routines.
// They are slow and meant for tests and the `verify` command.

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mcpq/continuous.hpp"
#include "mcpq/mdp.hpp"

namespace mcpq::oracle {

/// Unit-eigenvalue eigenvector of a column-stochastic matrix, normalized to
/// sum to one.
Eigen::VectorXd dominant_eigenvector(const Eigen::MatrixXd& column_stochastic);

/// sum_{k<terms} gamma^k R^k mu.
Eigen::VectorXd neumann_series(const Eigen::VectorXd& mu, const Eigen::MatrixXd& reversal, double gamma, int terms);

/// Infinite-horizon discounted state-action occupancy by summing
/// gamma^{t-1} p(z_t) explicitly from the raw transition table.
Eigen::VectorXd discounted_occupancy(const DiscreteMDP& mdp, const TabularPolicy& policy, int terms);

/// Nodes and weights for integrals against N(0, 1) (probabilists' Hermite),
/// via the Golub-Welsch eigenproblem.
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite(int n);

/// z_{1:H} = mean + factor * eps with eps ~ N(0, I), built by unrolling the
/// generative model one variable at a time.
struct TrajectoryMap {
  int dim = 0;
  int horizon = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd factor;

  /// Mean and covariance of the stacked slices (z_t for t in `times`).
  GaussianMoments slices(const std::vector<int>& times) const;
};

TrajectoryMap trajectory_map(const LinearGaussianMDP& model, const GaussianPolicy& policy, int horizon);

/// Q-potential moments normalized by U, per tau.
struct ReferenceQMoments {
  std::vector<double> tail;
  std::vector<Eigen::VectorXd> first;
  std::vector<Eigen::MatrixXd> second;
  double log_utility = 0.0;
};

/// Tensor Gauss-Hermite quadrature over every pair (z_tau, z_t). Cost grows
/// as nodes^(2 * joint_dim); meant for n_s = n_a = 1.
ReferenceQMoments quadrature_q_moments(const LinearGaussianMDP& model, const GaussianPolicy& policy,
                                       const MixtureReward& reward, int horizon, int nodes);

/// Exact moments by conditioning the full trajectory Gaussian on each reward
/// component (one dense conditioning per (t, j)).
ReferenceQMoments joint_gaussian_q_moments(const LinearGaussianMDP& model, const GaussianPolicy& policy,
                                           const MixtureReward& reward, int horizon);

/// Monte Carlo estimates of the unnormalized quantities
///   U = E[sum_t gamma^{t-1} R(z_t)],
///   X_tau = E[sum_{t>=tau} gamma^{t-1} R(z_t) phi(z_tau)],  phi = 1, z, z z^T,
/// with standard errors. `aggregate_*` is the sum over tau.
struct MonteCarloQMoments {
  std::int64_t samples = 0;
  double utility = 0.0, utility_se = 0.0;
  std::vector<Eigen::VectorXd> first, first_se;
  std::vector<Eigen::MatrixXd> second, second_se;
  double aggregate_mass = 0.0, aggregate_mass_se = 0.0;
  Eigen::VectorXd aggregate_first, aggregate_first_se;
  Eigen::MatrixXd aggregate_second, aggregate_second_se;
};

MonteCarloQMoments monte_carlo_q_moments(const LinearGaussianMDP& model, const GaussianPolicy& policy,
                                         const MixtureReward& reward, int horizon, std::int64_t samples,
                                         std::uint64_t seed);

}  // namespace mcpq::oracle
