#pragma once

// Linear-Gaussian MDPs with Gaussian-mixture rewards.
//
//   s_1 ~ N(mu0, Sigma0),  a_t | s_t ~ N(K s_t + m, pi_sigma I),
//   s_{t+1} ~ N(A s_t + B a_t, Sigma),
//   R(z) = sum_j w_j exp(-1/2 (y_j - M z)^T L_j^{-1} (y_j - M z)),
//
// with z = [s; a]. Everything here is finite-horizon.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcpq/mdp.hpp"
#include "mcpq/solvers.hpp"

namespace mcpq {

class LinearGaussianMDP {
 public:
  LinearGaussianMDP(Eigen::VectorXd mu0, Eigen::MatrixXd sigma0, Eigen::MatrixXd a, Eigen::MatrixXd b,
                    Eigen::MatrixXd sigma, double discount);

  int state_dim() const { return static_cast<int>(mu0_.size()); }
  int action_dim() const { return static_cast<int>(b_.cols()); }
  int joint_dim() const { return state_dim() + action_dim(); }

  const Eigen::VectorXd& mu0() const { return mu0_; }
  const Eigen::MatrixXd& sigma0() const { return sigma0_; }
  const Eigen::MatrixXd& a() const { return a_; }
  const Eigen::MatrixXd& b() const { return b_; }
  const Eigen::MatrixXd& sigma() const { return sigma_; }
  double discount() const { return discount_; }

 private:
  Eigen::VectorXd mu0_;
  Eigen::MatrixXd sigma0_, a_, b_, sigma_;
  double discount_;
};

struct GaussianPolicy {
  Eigen::MatrixXd gain;  // K, n_a x n_s
  Eigen::VectorXd offset;  // m
  double variance = 1.0;  // pi_sigma

  void validate(const LinearGaussianMDP& model) const;
  /// Number of free parameters: n_a*n_s + n_a + 1.
  int parameter_count() const { return static_cast<int>(gain.size() + offset.size()) + 1; }
};

struct RewardComponent {
  double weight = 1.0;
  Eigen::VectorXd target;  // y_j
  Eigen::MatrixXd cov;  // L_j
};

struct MixtureReward {
  std::vector<RewardComponent> components;
  Eigen::MatrixXd projection;  // M, shared by all components

  void validate(int joint_dim) const;
  double operator()(const Eigen::VectorXd& z) const;
};

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// z_{t+1} = F z_t + m_bar + noise(Sigma_bar).
struct LiftedDynamics {
  Eigen::MatrixXd transition;  // F
  Eigen::VectorXd offset;  // m_bar
  Eigen::MatrixXd noise;  // Sigma_bar
};

LiftedDynamics lift(const LinearGaussianMDP& model, const GaussianPolicy& policy);

/// Moments of z_1 with the action drawn from the policy.
GaussianMoments initial_moments(const LinearGaussianMDP& model, const GaussianPolicy& policy);

/// Joint marginals alpha_1..alpha_H.
std::vector<GaussianMoments> forward_moments(const LinearGaussianMDP& model, const GaussianPolicy& policy,
                                             int horizon);

/// p(z_t | z_{t+1}) = N(gain z_{t+1} + offset, cov).
struct GaussianReversal {
  Eigen::MatrixXd gain;  // G_t
  Eigen::VectorXd offset;
  Eigen::MatrixXd cov;
};

GaussianReversal gaussian_reversal(const GaussianMoments& marginal, const LiftedDynamics& lifted);

/// alpha_t(z) R(z) as a normalized distribution plus its log mass.
struct RewardMoments {
  double log_mass = 0.0;  // log of integral alpha_t R
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // centered
};

RewardMoments reward_component_moments(const GaussianMoments& marginal, const MixtureReward& reward);

/// Moments of the unnormalized Q-potentials Q_1..Q_H.
struct QMoments {
  std::vector<double> weight;  // q(t)
  std::vector<double> tail;  // Z_t = sum_{tau >= t} q(tau)
  std::vector<Eigen::VectorXd> first;  // integral z Q_t(z)
  std::vector<Eigen::MatrixXd> second;  // integral z z^T Q_t(z), uncentered
  std::vector<RewardMoments> reward;
  double log_utility = 0.0;

  double total_mass() const;
  Eigen::VectorXd first_sum() const;
  Eigen::MatrixXd second_sum() const;
};

/// Linear-time backward recursion over the reversal dynamics.
QMoments q_moment_recursion(const LinearGaussianMDP& model, const GaussianPolicy& policy,
                            const MixtureReward& reward, int horizon, OpCounter* ops = nullptr);

/// Quadratic baseline: every horizon component is smoothed separately and
/// the marginals are summed.
QMoments fb_moment_baseline(const LinearGaussianMDP& model, const GaussianPolicy& policy,
                            const MixtureReward& reward, int horizon, OpCounter* ops = nullptr);

/// log U = log sum_t gamma^{t-1} E_{alpha_t}[R].
double log_utility(const LinearGaussianMDP& model, const GaussianPolicy& policy, const MixtureReward& reward,
                   int horizon);

/// Weighted least squares for [K m], then the residual variance.
GaussianPolicy m_step_gaussian(const QMoments& moments, int state_dim, int action_dim);

/// sum_tau integral Q_tau(z) log pi(a|s) for a Gaussian policy.
double policy_energy(const QMoments& moments, const GaussianPolicy& policy);

struct ContinuousIteration {
  int iter = 0;
  double log_utility = 0.0;
  double wall_ms = 0.0;  // cumulative
  std::uint64_t conditioning = 0;  // cumulative
};

struct ContinuousReport {
  std::vector<ContinuousIteration> iterations;
  GaussianPolicy final_policy;
  Termination termination = Termination::MaxIterations;
  std::string backend;
  int horizon = 0;

  double final_log_utility() const { return iterations.back().log_utility; }
  /// Largest drop in log utility between consecutive iterates.
  double max_log_decrease() const;
};

/// Same columns as the discrete report; `utility` is exp(log U) and
/// `matvec_count` holds conditioning steps.
void write_report_csv(std::ostream& os, const ContinuousReport& report);

struct ContinuousEmOptions {
  Backend backend = Backend::QInference;
  int max_iters = 500;
  double budget_s = 0.0;  // wall-clock budget; 0 disables it
  double tol = 1e-10;  // stop when |delta log U| <= tol; negative disables it
};

ContinuousReport continuous_em_solve(const LinearGaussianMDP& model, const GaussianPolicy& init,
                                     const MixtureReward& reward, int horizon,
                                     const ContinuousEmOptions& options = {});

}  // namespace mcpq
