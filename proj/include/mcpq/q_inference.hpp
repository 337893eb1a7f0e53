#pragma once

// Linear-time Q-function recursions for the reward-weighted marginals.
//
// Q_tau(z) = sum_{t>=tau} q(z_tau = z, t) satisfies
//   Q_tau = q(., tau) + R_tau Q_{tau+1},
// where R_tau is the reversal p(z_tau | z_{tau+1}) of the trajectory
// distribution. The reversal never has to be formed: applying it to a vector
// v is alpha_tau .* (P^T (v ./ alpha_{tau+1})).

#include <vector>

#include "mcpq/mdp.hpp"

namespace mcpq {

struct QFunctions {
  std::vector<StateActionVector> q;  // Q_1 .. Q_H
  std::vector<double> weight;        // q(t), t = 1..H
  double utility = 0.0;

  int horizon() const { return static_cast<int>(q.size()); }
};

/// gamma^{tau-1} alpha_tau(z) R(z) / U; sums to q(tau).
StateActionVector q_component_term(const StateActionVector& alpha_tau, const DiscreteMDP& mdp, int tau,
                                   double utility);

/// Applies the reversal p(z_tau | z_{tau+1}) to `next` without forming it.
StateActionVector apply_reversal(const StateActionVector& alpha_tau, const Eigen::MatrixXd& joint,
                                 const StateActionVector& alpha_next, const StateActionVector& next);

QFunctions q_functions_finite(const DiscreteMDP& mdp, const TabularPolicy& policy, int horizon,
                              OpCounter* ops = nullptr);

/// sum_tau Q_tau.
StateActionVector q_policy_statistic(const QFunctions& qf);

struct StationaryResult {
  StateActionVector alpha;              // alpha_{tau_hat}
  int tau_hat = 0;                      // first tau with |alpha_{tau+1} - alpha_tau|_inf <= tol
  std::vector<StateActionVector> prefix;  // alpha_1 .. alpha_{tau_hat}
};

/// Power iteration of the forward messages. Throws ConvergenceError (with the
/// last iterate and a periodicity diagnostic) when `cap` steps do not suffice.
StationaryResult stationary_distribution(const DiscreteMDP& mdp, const TabularPolicy& policy, double tol,
                                         int cap, OpCounter* ops = nullptr);

/// Stationary reversal: entry (z, z') = P(z'|z) alpha(z) / (P alpha)(z').
Eigen::MatrixXd stationary_reversal(const StateActionVector& alpha, const Eigen::MatrixXd& joint);

/// Q = (I - gamma R)^{-1} mu, solved on the support of the reversal/source.
StateActionVector stationary_q_direct(const StateActionVector& mu, const Eigen::MatrixXd& reversal,
                                      double gamma);

struct FixedPointResult {
  StateActionVector q;
  int iterations = 0;
};

/// Iterates Q <- mu + gamma R Q from zero until the a-posteriori error bound
/// gamma/(1-gamma) |Q_{k+1} - Q_k|_inf drops to `tol`.
FixedPointResult stationary_q_fixed_point(const StateActionVector& mu, const Eigen::MatrixXd& reversal,
                                          double gamma, double tol, int cap);

enum class StationarySolver { Auto, Direct, FixedPoint };

struct InfiniteOptions {
  double tol = 0.01;  // stationarity threshold on successive forward messages
  int cap = 100000;
  StationarySolver solver = StationarySolver::Auto;
  double fixed_point_tol = 1e-12;
  int direct_limit = 2000;  // Auto uses the dense solve up to this many pairs
};

struct StationarySolution {
  StateActionVector alpha;
  int tau_hat = 0;
  Eigen::MatrixXd reversal;
  StateActionVector q;  // stationary Q(z) = gamma^{1-tau_hat} Q_{tau_hat}(z)
  double utility = 0.0;
};

struct InfiniteQResult {
  StateActionVector statistic;
  StationarySolution stationary;
  std::vector<StateActionVector> q;  // Q_1 .. Q_{tau_hat}
};

InfiniteQResult q_statistic_infinite(const DiscreteMDP& mdp, const TabularPolicy& policy,
                                     const InfiniteOptions& options = {}, OpCounter* ops = nullptr);

}  // namespace mcpq
