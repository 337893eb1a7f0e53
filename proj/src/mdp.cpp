#include "mcpq/mdp.hpp"

#include <cmath>
#include <sstream>

#include "mcpq/q_inference.hpp"

namespace mcpq {

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw InputError(field, what);
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

DiscreteMDP::DiscreteMDP(int num_states, int num_actions, Eigen::VectorXd initial,
                         Eigen::MatrixXd transition, Eigen::VectorXd reward, double discount)
    : num_states_(num_states),
      num_actions_(num_actions),
      initial_(std::move(initial)),
      transition_(std::move(transition)),
      reward_(std::move(reward)),
      discount_(discount) {
  require(num_states_ > 0, "num_states", "must be positive");
  require(num_actions_ > 0, "num_actions", "must be positive");
  const int pairs = num_states_ * num_actions_;
  require(initial_.size() == num_states_, "initial", "expected one entry per state");
  require(transition_.rows() == pairs && transition_.cols() == num_states_, "transition",
          "expected [num_states][num_actions][num_states]");
  require(reward_.size() == pairs, "reward", "expected [num_states][num_actions]");
  require(all_finite(initial_) && all_finite(transition_) && all_finite(reward_), "",
          "non-finite entries");

  require((initial_.array() >= 0.0).all(), "initial", "negative probability");
  require(std::abs(initial_.sum() - 1.0) <= tolerance::kStructural, "initial",
          "does not sum to 1");
  require((transition_.array() >= 0.0).all(), "transition", "negative probability");
  for (int z = 0; z < pairs; ++z) {
    if (std::abs(transition_.row(z).sum() - 1.0) > tolerance::kStructural) {
      std::ostringstream os;
      os << "row for state " << z / num_actions_ << ", action " << z % num_actions_
         << " does not sum to 1";
      throw InputError("transition", os.str());
    }
  }
  require((reward_.array() >= 0.0).all(), "reward", "rewards must be nonnegative");
  require(std::isfinite(discount_) && discount_ >= 0.0 && discount_ < 1.0, "gamma",
          "discount must lie in [0, 1)");
}

TabularPolicy::TabularPolicy(Eigen::MatrixXd table) : table_(std::move(table)) {
  require(table_.rows() > 0 && table_.cols() > 0, "policy", "empty table");
  require(table_.allFinite() && (table_.array() >= 0.0).all(), "policy",
          "entries must be finite and nonnegative");
  for (Eigen::Index s = 0; s < table_.rows(); ++s) {
    if (std::abs(table_.row(s).sum() - 1.0) > tolerance::kStructural) {
      throw InputError("policy", "row " + std::to_string(s) + " does not sum to 1");
    }
  }
}

TabularPolicy TabularPolicy::uniform(int num_states, int num_actions) {
  return TabularPolicy(Eigen::MatrixXd::Constant(num_states, num_actions, 1.0 / num_actions));
}

TabularPolicy TabularPolicy::deterministic(int num_actions, const std::vector<int>& actions) {
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()), num_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    require(actions[s] >= 0 && actions[s] < num_actions, "policy", "action out of range");
    table(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  }
  return TabularPolicy(std::move(table));
}

Horizon Horizon::finite(int steps) {
  require(steps >= 1, "horizon", "finite horizon must be at least 1");
  Horizon h;
  h.steps_ = steps;
  return h;
}

int Horizon::steps() const {
  if (!steps_) throw std::logic_error("infinite horizon has no step count");
  return *steps_;
}

void check_compatible(const DiscreteMDP& mdp, const TabularPolicy& policy) {
  if (policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions()) {
    throw InputError("policy", "dimensions do not match the MDP");
  }
}

StateActionVector initial_message(const DiscreteMDP& mdp, const TabularPolicy& policy) {
  check_compatible(mdp, policy);
  StateActionVector alpha(mdp.num_pairs());
  for (int s = 0; s < mdp.num_states(); ++s)
    for (int a = 0; a < mdp.num_actions(); ++a) alpha(mdp.pair(s, a)) = mdp.initial()(s) * policy(s, a);
  return alpha;
}

Eigen::MatrixXd joint_transition(const DiscreteMDP& mdp, const TabularPolicy& policy) {
  check_compatible(mdp, policy);
  const int n = mdp.num_pairs();
  const int na = mdp.num_actions();
  Eigen::MatrixXd joint(n, n);
  for (int z = 0; z < n; ++z) {
    for (int s2 = 0; s2 < mdp.num_states(); ++s2) {
      const double p = mdp.transition()(z, s2);
      for (int a2 = 0; a2 < na; ++a2) joint(s2 * na + a2, z) = p * policy(s2, a2);
    }
  }
  return joint;
}

std::vector<StateActionVector> forward_messages(const DiscreteMDP& mdp, const TabularPolicy& policy,
                                                int horizon, OpCounter* ops) {
  require(horizon >= 1, "horizon", "must be at least 1");
  const Eigen::MatrixXd joint = joint_transition(mdp, policy);
  std::vector<StateActionVector> alpha;
  alpha.reserve(static_cast<std::size_t>(horizon));
  alpha.push_back(initial_message(mdp, policy));
  for (int t = 1; t < horizon; ++t) {
    alpha.push_back(joint * alpha.back());
    if (ops) ++ops->matvec;
  }
  return alpha;
}

double utility(const DiscreteMDP& mdp, const TabularPolicy& policy, const Horizon& horizon,
               const StationaryOptions& stationary) {
  const double gamma = mdp.discount();
  if (horizon.is_finite()) {
    const auto alpha = forward_messages(mdp, policy, horizon.steps());
    double u = 0.0;
    double discount = 1.0;
    for (const auto& a : alpha) {
      u += discount * a.dot(mdp.reward());
      discount *= gamma;
    }
    return u;
  }
  const StationaryResult st = stationary_distribution(mdp, policy, stationary.tol, stationary.cap);
  double u = 0.0;
  double discount = 1.0;
  for (int t = 0; t + 1 < st.tau_hat; ++t) {
    u += discount * st.prefix[static_cast<std::size_t>(t)].dot(mdp.reward());
    discount *= gamma;
  }
  return u + discount / (1.0 - gamma) * st.alpha.dot(mdp.reward());
}

StateActionVector classical_policy_evaluation(const DiscreteMDP& mdp, const TabularPolicy& policy,
                                              const Horizon& horizon) {
  const Eigen::MatrixXd joint = joint_transition(mdp, policy);
  const double gamma = mdp.discount();
  if (horizon.is_finite()) {
    StateActionVector q = mdp.reward();
    for (int k = 1; k < horizon.steps(); ++k) q = mdp.reward() + gamma * (joint.transpose() * q);
    return q;
  }
  const int n = mdp.num_pairs();
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - gamma * joint.transpose();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  StateActionVector q = lu.solve(mdp.reward());
  // I - gamma P^T is strictly diagonally dominant by columns for gamma < 1.
  if (!q.allFinite()) throw NumericalError("policy evaluation system is singular");
  return q;
}

double policy_value(const DiscreteMDP& mdp, const TabularPolicy& policy, const Horizon& horizon) {
  return initial_message(mdp, policy).dot(classical_policy_evaluation(mdp, policy, horizon));
}

Eigen::MatrixXd reversal_dynamics(const StateActionVector& alpha_t, const Eigen::MatrixXd& joint,
                                  const StateActionVector& alpha_next) {
  const Eigen::Index n = alpha_t.size();
  if (joint.rows() != n || joint.cols() != n || alpha_next.size() != n)
    throw InputError("reversal", "dimension mismatch");
  Eigen::MatrixXd reverse = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index zn = 0; zn < n; ++zn) {
    if (alpha_next(zn) <= 0.0) continue;
    for (Eigen::Index z = 0; z < n; ++z) reverse(z, zn) = joint(zn, z) * alpha_t(z) / alpha_next(zn);
  }
  return reverse;
}

bool is_distribution(const StateActionVector& v, double tol) {
  return (v.array() >= 0.0).all() && std::abs(v.sum() - 1.0) <= tol;
}

}  // namespace mcpq
