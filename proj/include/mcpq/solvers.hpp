#pragma once

// Policy improvement on top of the inference statistics: tabular EM and
// softmax policy gradients. Both run with either backend and either
// horizon mode.
//
// Infinite horizons: the Q backend uses the stationary-distribution
// recursion; the forward-backward backend truncates the horizon with the
// time-marginal criterion.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mcpq/mdp.hpp"
#include "mcpq/q_inference.hpp"

namespace mcpq {

enum class Backend { ForwardBackward, QInference };

std::string to_string(Backend backend);
Backend parse_backend(const std::string& name);

struct InferenceConfig {
  Backend backend = Backend::QInference;
  Horizon horizon = Horizon::finite(1);
  double stationary_tol = 0.01;
  int stationary_cap = 100000;
  double eta = 0.01;  // time-marginal cut-off for the fb backend on infinite horizons
  int eta_cap = 100000;

  std::string horizon_mode() const;
};

struct PolicyStatistic {
  StateActionVector values;  // sum_t sum_{tau<=t} q(z_tau = z, t)
  double utility = 0.0;      // normalizer used by the inference pass
  int effective_horizon = 0;  // H, tau_hat, or the time-marginal cut
};

PolicyStatistic policy_statistic(const DiscreteMDP& mdp, const TabularPolicy& policy,
                                 const InferenceConfig& config, OpCounter* ops = nullptr);

/// Exact utility of `policy` for the configured horizon (used for reporting).
double evaluate_utility(const DiscreteMDP& mdp, const TabularPolicy& policy, const Horizon& horizon);

/// pi(a|s) proportional to the statistic; rows with no mass keep the old row.
TabularPolicy em_update(const TabularPolicy& policy, const StateActionVector& statistic);

TabularPolicy em_step_tabular(const DiscreteMDP& mdp, const TabularPolicy& policy,
                              const InferenceConfig& config, OpCounter* ops = nullptr);

enum class Termination { Converged, MaxIterations, LineSearchFailed, BudgetExhausted };

std::string to_string(Termination reason);

struct IterationRecord {
  int iter = 0;
  double utility = 0.0;
  double wall_ms = 0.0;
  std::uint64_t matvec_count = 0;  // cumulative message operations
};

struct SolveReport {
  std::vector<IterationRecord> iterations;  // iteration 0 is the initial policy
  TabularPolicy final_policy = TabularPolicy::uniform(1, 1);
  Termination termination = Termination::MaxIterations;
  std::string backend;
  std::string horizon_mode;

  double final_utility() const { return iterations.back().utility; }
  /// Largest decrease between consecutive utilities (0 when monotone).
  double max_decrease() const;
};

/// CSV with columns iter, utility, wall_ms, matvec_count, backend, horizon_mode.
void write_report_csv(std::ostream& os, const SolveReport& report);

struct EmOptions {
  double tol = 1e-8;
  int max_iters = 500;
};

SolveReport em_solve(const DiscreteMDP& mdp, const TabularPolicy& init, const InferenceConfig& config,
                     const EmOptions& options = {});

/// Independent restarts from symmetric-Dirichlet(1) initial policies drawn
/// from `seed`; restart r uses seed + r.
std::vector<SolveReport> em_solve_restarts(const DiscreteMDP& mdp, const InferenceConfig& config,
                                           const EmOptions& options, int restarts, std::uint64_t seed);

class SoftmaxPolicy {
 public:
  explicit SoftmaxPolicy(Eigen::MatrixXd logits);

  const Eigen::MatrixXd& logits() const { return logits_; }
  TabularPolicy table() const;

 private:
  Eigen::MatrixXd logits_;
};

/// d log U / d logit(s,a) = stat(s,a) - pi(a|s) sum_a' stat(s,a').
Eigen::MatrixXd policy_gradient(const DiscreteMDP& mdp, const SoftmaxPolicy& policy,
                                const InferenceConfig& config, OpCounter* ops = nullptr);

struct PgOptions {
  double initial_step = 1.0;
  double shrink = 0.5;
  double armijo = 1e-4;
  int max_backtracks = 60;
  double tol = 1e-8;        // stop when the utility gain falls below tol
  double grad_tol = 1e-10;  // or when the gradient vanishes
  int max_iters = 500;
};

struct PgReport {
  SolveReport report;
  SoftmaxPolicy final_logits{Eigen::MatrixXd::Zero(1, 1)};
  std::vector<Eigen::MatrixXd> logit_history;
};

PgReport pg_solve(const DiscreteMDP& mdp, const SoftmaxPolicy& init, const InferenceConfig& config,
                  const PgOptions& options = {});

}  // namespace mcpq
