#pragma once

// Quadratic-cost forward-backward baseline for the reward-weighted
// marginals, plus the time-marginal horizon heuristic used as the
// comparison method for infinite horizons.

#include <vector>

#include "mcpq/mdp.hpp"

namespace mcpq {

/// beta_k stored as normalized[k-1] * exp(log_scale[k-1]).
struct BackwardMessages {
  std::vector<StateActionVector> normalized;
  std::vector<double> log_scale;

  int count() const { return static_cast<int>(normalized.size()); }
  /// Unnormalized beta_k; may under/overflow for long horizons.
  StateActionVector value(int k) const;
};

/// beta_1 = R, beta_{k+1} = P^T beta_k, renormalized by the max entry each step.
BackwardMessages backward_messages(const DiscreteMDP& mdp, const TabularPolicy& policy, int count,
                                   OpCounter* ops = nullptr);

struct MessageSet {
  std::vector<StateActionVector> forward;
  BackwardMessages backward;
  double discount = 0.0;

  int horizon() const { return static_cast<int>(forward.size()); }
};

MessageSet build_messages(const DiscreteMDP& mdp, const TabularPolicy& policy, int horizon,
                          OpCounter* ops = nullptr);

struct Marginal {
  StateActionVector distribution;  // q(z_tau | t)
  double log_mass = 0.0;           // log sum_z alpha_tau(z) beta_{t+1-tau}(z) = log E[R(z_t)]
};

/// Normalized alpha_tau * beta_{t+1-tau}. Throws ZeroUtilityError when
/// component t carries no reward mass.
Marginal fb_marginal(const MessageSet& messages, int tau, int t);

/// sum_{t=1}^H sum_{tau<=t} q(z_tau = z, t) with the mixture weights
/// gamma^{t-1} E[R(z_t)] / U. Zero-mass components are skipped.
StateActionVector fb_policy_statistic(const DiscreteMDP& mdp, const TabularPolicy& policy, int horizon,
                                      OpCounter* ops = nullptr, double* utility_out = nullptr);

/// q(t) = gamma^{t-1} sum_z alpha_t(z) R(z) / U.
double time_marginal(const DiscreteMDP& mdp, int t, const StateActionVector& alpha_t, double utility);

struct TimeMarginalCut {
  int horizon = 0;
  bool triggered = false;  // false: the cap was reached first
};

/// Smallest t with q(t) <= eta * sum_{tau<t} q(tau) (over a positive prefix
/// mass), or `cap` when the criterion never fires.
TimeMarginalCut time_marginal_horizon(const DiscreteMDP& mdp, const TabularPolicy& policy, double eta,
                                      int cap);

}  // namespace mcpq
