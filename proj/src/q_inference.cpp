#include "mcpq/q_inference.hpp"

#include <cmath>
#include <sstream>

namespace mcpq {

StateActionVector q_component_term(const StateActionVector& alpha_tau, const DiscreteMDP& mdp, int tau,
                                   double utility) {
  if (!(utility > 0.0)) throw ZeroUtilityError("component term requires positive utility");
  const double discount = tau == 1 ? 1.0 : std::pow(mdp.discount(), tau - 1);
  return (discount / utility) * alpha_tau.cwiseProduct(mdp.reward());
}

StateActionVector apply_reversal(const StateActionVector& alpha_tau, const Eigen::MatrixXd& joint,
                                 const StateActionVector& alpha_next, const StateActionVector& next) {
  StateActionVector ratio(next.size());
  for (Eigen::Index z = 0; z < next.size(); ++z) ratio(z) = alpha_next(z) > 0.0 ? next(z) / alpha_next(z) : 0.0;
  return alpha_tau.cwiseProduct(joint.transpose() * ratio);
}

QFunctions q_functions_finite(const DiscreteMDP& mdp, const TabularPolicy& policy, int horizon,
                              OpCounter* ops) {
  const Eigen::MatrixXd joint = joint_transition(mdp, policy);
  const auto alpha = forward_messages(mdp, policy, horizon, ops);

  QFunctions out;
  double discount = 1.0;
  for (int t = 1; t <= horizon; ++t) {
    out.utility += discount * alpha[static_cast<std::size_t>(t - 1)].dot(mdp.reward());
    discount *= mdp.discount();
  }
  if (!(out.utility > 0.0)) throw ZeroUtilityError("policy has zero utility");

  const auto h = static_cast<std::size_t>(horizon);
  out.q.resize(h);
  out.weight.resize(h);
  for (int tau = horizon; tau >= 1; --tau) {
    const auto i = static_cast<std::size_t>(tau - 1);
    StateActionVector term = q_component_term(alpha[i], mdp, tau, out.utility);
    if (ops) ++ops->products;
    out.weight[i] = term.sum();
    if (tau < horizon) {
      term += apply_reversal(alpha[i], joint, alpha[i + 1], out.q[i + 1]);
      if (ops) ++ops->matvec;
    }
    out.q[i] = std::move(term);
  }
  return out;
}

StateActionVector q_policy_statistic(const QFunctions& qf) {
  StateActionVector total = StateActionVector::Zero(qf.q.front().size());
  for (const auto& q : qf.q) total += q;
  return total;
}

namespace {

std::string periodicity_diagnostic(const std::vector<StateActionVector>& history, double tol) {
  const std::size_t n = history.size();
  std::ostringstream os;
  for (std::size_t period = 2; period <= 8 && period < n; ++period) {
    if ((history[n - 1] - history[n - 1 - period]).lpNorm<Eigen::Infinity>() <= tol) {
      os << "forward messages oscillate with period " << period;
      return os.str();
    }
  }
  os << "last change " << (history[n - 1] - history[n - 2]).lpNorm<Eigen::Infinity>();
  return os.str();
}

}  // namespace

StationaryResult stationary_distribution(const DiscreteMDP& mdp, const TabularPolicy& policy, double tol,
                                         int cap, OpCounter* ops) {
  if (!(tol > 0.0)) throw InputError("tol", "must be positive");
  if (cap < 1) throw InputError("cap", "must be at least 1");
  const Eigen::MatrixXd joint = joint_transition(mdp, policy);
  StationaryResult out;
  out.prefix.push_back(initial_message(mdp, policy));
  for (int tau = 1; tau <= cap; ++tau) {
    StateActionVector next = joint * out.prefix.back();
    if (ops) ++ops->matvec;
    if ((next - out.prefix.back()).lpNorm<Eigen::Infinity>() <= tol) {
      out.tau_hat = tau;
      out.alpha = out.prefix.back();
      return out;
    }
    out.prefix.push_back(std::move(next));
  }
  const std::string diag = periodicity_diagnostic(out.prefix, tol);
  throw ConvergenceError("forward messages did not reach a stationary distribution within " +
                             std::to_string(cap) + " steps",
                         out.prefix.back(), diag);
}

Eigen::MatrixXd stationary_reversal(const StateActionVector& alpha, const Eigen::MatrixXd& joint) {
  return reversal_dynamics(alpha, joint, joint * alpha);
}

StateActionVector stationary_q_direct(const StateActionVector& mu, const Eigen::MatrixXd& reversal,
                                      double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("gamma", "must lie in [0, 1)");
  const Eigen::Index n = mu.size();
  // Pairs with no source and no outgoing reversal mass have Q = 0.
  std::vector<Eigen::Index> support;
  for (Eigen::Index z = 0; z < n; ++z)
    if (mu(z) != 0.0 || reversal.row(z).cwiseAbs().sum() > 0.0) support.push_back(z);

  StateActionVector q = StateActionVector::Zero(n);
  if (support.empty()) return q;
  const auto m = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd system(m, m);
  StateActionVector rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    rhs(i) = mu(support[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m; ++j)
      system(i, j) = (i == j ? 1.0 : 0.0) - gamma * reversal(support[static_cast<std::size_t>(i)], support[static_cast<std::size_t>(j)]);
  }
  const StateActionVector solved = system.partialPivLu().solve(rhs);
  for (Eigen::Index i = 0; i < m; ++i) q(support[static_cast<std::size_t>(i)]) = solved(i);

  const double residual = ((q - gamma * (reversal * q)) - mu).lpNorm<Eigen::Infinity>();
  if (!q.allFinite() || residual > 1e-10 * std::max(mu.lpNorm<Eigen::Infinity>(), 1e-300))
    throw NumericalError("stationary Q solve failed (residual " + std::to_string(residual) + ")");
  return q;
}

FixedPointResult stationary_q_fixed_point(const StateActionVector& mu, const Eigen::MatrixXd& reversal,
                                          double gamma, double tol, int cap) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("gamma", "must lie in [0, 1)");
  if (!(tol > 0.0)) throw InputError("tol", "must be positive");
  FixedPointResult out;
  out.q = StateActionVector::Zero(mu.size());
  const double bound_factor = gamma > 0.0 ? gamma / (1.0 - gamma) : 0.0;
  for (int k = 1; k <= cap; ++k) {
    StateActionVector next = mu + gamma * (reversal * out.q);
    const double change = (next - out.q).lpNorm<Eigen::Infinity>();
    out.q = std::move(next);
    out.iterations = k;
    if (bound_factor * change <= tol) return out;
  }
  throw ConvergenceError("stationary Q fixed point did not converge", out.q,
                         "cap of " + std::to_string(cap) + " iterations reached");
}

InfiniteQResult q_statistic_infinite(const DiscreteMDP& mdp, const TabularPolicy& policy,
                                     const InfiniteOptions& options, OpCounter* ops) {
  const double gamma = mdp.discount();
  const Eigen::MatrixXd joint = joint_transition(mdp, policy);
  StationaryResult st = stationary_distribution(mdp, policy, options.tol, options.cap, ops);
  const int tau_hat = st.tau_hat;

  double utility = 0.0;
  double discount = 1.0;
  for (int t = 1; t < tau_hat; ++t) {
    utility += discount * st.prefix[static_cast<std::size_t>(t - 1)].dot(mdp.reward());
    discount *= gamma;
  }
  // discount == gamma^{tau_hat - 1} here.
  const double tail = discount / (1.0 - gamma);
  utility += tail * st.alpha.dot(mdp.reward());
  if (!(utility > 0.0)) throw ZeroUtilityError("policy has zero utility");

  InfiniteQResult out;
  StationarySolution& sol = out.stationary;
  sol.alpha = st.alpha;
  sol.tau_hat = tau_hat;
  sol.utility = utility;
  sol.reversal = stationary_reversal(st.alpha, joint);
  const StateActionVector mu = st.alpha.cwiseProduct(mdp.reward()) / utility;

  const bool direct = options.solver == StationarySolver::Direct ||
                      (options.solver == StationarySolver::Auto && mdp.num_pairs() <= options.direct_limit);
  sol.q = direct ? stationary_q_direct(mu, sol.reversal, gamma)
                 : stationary_q_fixed_point(mu, sol.reversal, gamma, options.fixed_point_tol, options.cap).q;

  const auto n_pre = static_cast<std::size_t>(tau_hat);
  out.q.resize(n_pre);
  out.q[n_pre - 1] = discount * sol.q;
  out.statistic = tail * sol.q;
  for (int t = tau_hat - 1; t >= 1; --t) {
    const auto i = static_cast<std::size_t>(t - 1);
    StateActionVector qt = q_component_term(st.prefix[i], mdp, t, utility);
    qt += apply_reversal(st.prefix[i], joint, st.prefix[i + 1], out.q[i + 1]);
    if (ops) {
      ++ops->products;
      ++ops->matvec;
    }
    out.statistic += qt;
    out.q[i] = std::move(qt);
  }
  return out;
}

}  // namespace mcpq
