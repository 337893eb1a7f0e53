#pragma once

// Discrete MDP model, tabular policies and the trajectory-distribution
// primitives shared by every inference backend.
//
// State-action pairs are flattened as z = s * num_actions + a.

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mcpq/errors.hpp"

namespace mcpq {

namespace tolerance {
inline constexpr double kStructural = 1e-12;     // row sums of stochastic tables
inline constexpr double kNormalization = 1e-10;  // message / marginal normalization
inline constexpr double kOracle = 1e-9;          // agreement with brute-force oracles
}  // namespace tolerance

/// Values over state-action pairs: a distribution (alpha messages) or an
/// unnormalized nonnegative potential (Q-functions, statistics).
using StateActionVector = Eigen::VectorXd;

/// Counts the message-level operations performed by an inference routine.
/// `matvec` counts dense matrix-vector products, `products` counts
/// elementwise vector products of messages, `conditioning` counts Gaussian
/// conditioning/propagation steps in the continuous model.
struct OpCounter {
  std::uint64_t matvec = 0;
  std::uint64_t products = 0;
  std::uint64_t conditioning = 0;

  std::uint64_t message_ops() const { return matvec + products; }
  void reset() { *this = OpCounter{}; }
};

class DiscreteMDP {
 public:
  /// `transition` has one row per state-action pair z = s*A + a holding
  /// p(s'|s,a); `reward` holds R(s,a) in the same flattened layout.
  DiscreteMDP(int num_states, int num_actions, Eigen::VectorXd initial, Eigen::MatrixXd transition,
              Eigen::VectorXd reward, double discount);

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int num_pairs() const { return num_states_ * num_actions_; }
  int pair(int s, int a) const { return s * num_actions_ + a; }

  const Eigen::VectorXd& initial() const { return initial_; }
  const Eigen::MatrixXd& transition() const { return transition_; }
  double transition(int s, int a, int next) const { return transition_(pair(s, a), next); }
  const Eigen::VectorXd& reward() const { return reward_; }
  double reward(int s, int a) const { return reward_(pair(s, a)); }
  double discount() const { return discount_; }

 private:
  int num_states_;
  int num_actions_;
  Eigen::VectorXd initial_;
  Eigen::MatrixXd transition_;
  Eigen::VectorXd reward_;
  double discount_;
};

/// pi(a|s) stored as a states x actions row-stochastic table.
class TabularPolicy {
 public:
  explicit TabularPolicy(Eigen::MatrixXd table);

  static TabularPolicy uniform(int num_states, int num_actions);
  /// Deterministic policy choosing `actions[s]` in state s.
  static TabularPolicy deterministic(int num_actions, const std::vector<int>& actions);

  int num_states() const { return static_cast<int>(table_.rows()); }
  int num_actions() const { return static_cast<int>(table_.cols()); }
  double operator()(int s, int a) const { return table_(s, a); }
  const Eigen::MatrixXd& table() const { return table_; }

 private:
  Eigen::MatrixXd table_;
};

class Horizon {
 public:
  static Horizon finite(int steps);
  static Horizon infinite() { return Horizon{}; }

  bool is_finite() const { return steps_.has_value(); }
  int steps() const;

 private:
  Horizon() = default;
  std::optional<int> steps_;
};

void check_compatible(const DiscreteMDP& mdp, const TabularPolicy& policy);

/// alpha_1(z) = p_1(s) pi(a|s).
StateActionVector initial_message(const DiscreteMDP& mdp, const TabularPolicy& policy);

/// Column-stochastic P(z'|z) = pi(a'|s') p(s'|s,a); entry (z', z).
Eigen::MatrixXd joint_transition(const DiscreteMDP& mdp, const TabularPolicy& policy);

/// alpha_1 .. alpha_H, the unconditional state-action marginals.
std::vector<StateActionVector> forward_messages(const DiscreteMDP& mdp, const TabularPolicy& policy,
                                                int horizon, OpCounter* ops = nullptr);

struct StationaryOptions {
  double tol = 0.01;
  int cap = 100000;
};

/// Total expected discounted reward. The infinite horizon uses the forward
/// iterates up to the stationarity index and a geometric tail on the
/// stationary distribution; throws ConvergenceError when it is not reached.
double utility(const DiscreteMDP& mdp, const TabularPolicy& policy, const Horizon& horizon,
               const StationaryOptions& stationary = {});

/// Classical state-action values. Finite(k): k applications of
/// Q <- R + gamma P^T Q starting from Q = R. Infinite: (I - gamma P^T) Q = R.
StateActionVector classical_policy_evaluation(const DiscreteMDP& mdp, const TabularPolicy& policy,
                                              const Horizon& horizon);

/// Exact utility as sum_z alpha_1(z) Q^pi(z), no stationarity assumption.
double policy_value(const DiscreteMDP& mdp, const TabularPolicy& policy, const Horizon& horizon);

/// Reversal p(z_t = z | z_{t+1} = z') as a matrix with entry (z, z').
/// Columns with alpha_next(z') = 0 are all zero.
Eigen::MatrixXd reversal_dynamics(const StateActionVector& alpha_t, const Eigen::MatrixXd& joint,
                                  const StateActionVector& alpha_next);

bool is_distribution(const StateActionVector& v, double tol = tolerance::kNormalization);

}  // namespace mcpq
