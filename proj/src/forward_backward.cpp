#include "mcpq/forward_backward.hpp"

#include <cmath>
#include <limits>

namespace mcpq {

StateActionVector BackwardMessages::value(int k) const {
  const auto i = static_cast<std::size_t>(k - 1);
  return normalized.at(i) * std::exp(log_scale.at(i));
}

BackwardMessages backward_messages(const DiscreteMDP& mdp, const TabularPolicy& policy, int count,
                                   OpCounter* ops) {
  if (count < 1) throw InputError("count", "must be at least 1");
  const Eigen::MatrixXd joint_t = joint_transition(mdp, policy).transpose();
  BackwardMessages out;
  out.normalized.reserve(static_cast<std::size_t>(count));
  out.log_scale.reserve(static_cast<std::size_t>(count));

  StateActionVector beta = mdp.reward();
  double log_scale = 0.0;
  for (int k = 1; k <= count; ++k) {
    if (k > 1) {
      beta = joint_t * beta;
      if (ops) ++ops->matvec;
    }
    const double peak = beta.maxCoeff();
    if (peak > 0.0) {
      beta /= peak;
      log_scale += std::log(peak);
    }
    out.normalized.push_back(beta);
    out.log_scale.push_back(peak > 0.0 ? log_scale : -std::numeric_limits<double>::infinity());
  }
  return out;
}

MessageSet build_messages(const DiscreteMDP& mdp, const TabularPolicy& policy, int horizon,
                          OpCounter* ops) {
  MessageSet m;
  m.forward = forward_messages(mdp, policy, horizon, ops);
  m.backward = backward_messages(mdp, policy, horizon, ops);
  m.discount = mdp.discount();
  return m;
}

Marginal fb_marginal(const MessageSet& messages, int tau, int t) {
  if (tau < 1 || tau > t || t > messages.horizon())
    throw InputError("marginal", "requires 1 <= tau <= t <= H");
  const int k = t + 1 - tau;
  const auto& beta = messages.backward.normalized[static_cast<std::size_t>(k - 1)];
  StateActionVector product = messages.forward[static_cast<std::size_t>(tau - 1)].cwiseProduct(beta);
  const double mass = product.sum();
  if (!(mass > 0.0)) throw ZeroUtilityError("component " + std::to_string(t) + " has zero reward mass");
  Marginal out;
  out.distribution = product / mass;
  out.log_mass = std::log(mass) + messages.backward.log_scale[static_cast<std::size_t>(k - 1)];
  return out;
}

StateActionVector fb_policy_statistic(const DiscreteMDP& mdp, const TabularPolicy& policy, int horizon,
                                      OpCounter* ops, double* utility_out) {
  const MessageSet messages = build_messages(mdp, policy, horizon, ops);
  const double gamma = mdp.discount();
  const double log_gamma = gamma > 0.0 ? std::log(gamma) : -std::numeric_limits<double>::infinity();
  auto log_discount = [&](int t) { return t == 1 ? 0.0 : (t - 1) * log_gamma; };

  // E[R(z_t)] from the forward messages; these are also the component masses.
  std::vector<double> expected_reward(static_cast<std::size_t>(horizon));
  double u = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    expected_reward[static_cast<std::size_t>(t - 1)] =
        messages.forward[static_cast<std::size_t>(t - 1)].dot(mdp.reward());
    u += std::exp(log_discount(t)) * expected_reward[static_cast<std::size_t>(t - 1)];
  }
  if (!(u > 0.0)) throw ZeroUtilityError("policy has zero utility");
  const double log_u = std::log(u);
  if (utility_out) *utility_out = u;

  StateActionVector stat = StateActionVector::Zero(mdp.num_pairs());
  for (int t = 1; t <= horizon; ++t) {
    if (expected_reward[static_cast<std::size_t>(t - 1)] <= 0.0) continue;
    for (int tau = 1; tau <= t; ++tau) {
      const auto k = static_cast<std::size_t>(t - tau);
      const double w = std::exp(log_discount(t) + messages.backward.log_scale[k] - log_u);
      stat += w * messages.forward[static_cast<std::size_t>(tau - 1)].cwiseProduct(messages.backward.normalized[k]);
      if (ops) ++ops->products;
    }
  }
  return stat;
}

double time_marginal(const DiscreteMDP& mdp, int t, const StateActionVector& alpha_t, double utility) {
  if (!(utility > 0.0)) throw ZeroUtilityError("time marginal requires positive utility");
  return std::pow(mdp.discount(), t - 1) * alpha_t.dot(mdp.reward()) / utility;
}

TimeMarginalCut time_marginal_horizon(const DiscreteMDP& mdp, const TabularPolicy& policy, double eta,
                                      int cap) {
  if (!(eta > 0.0 && eta < 1.0)) throw InputError("eta", "must lie in (0, 1)");
  if (cap < 1) throw InputError("cap", "must be at least 1");
  const Eigen::MatrixXd joint = joint_transition(mdp, policy);
  StateActionVector alpha = initial_message(mdp, policy);
  double discount = 1.0;
  double prefix = 0.0;
  for (int t = 1; t <= cap; ++t) {
    if (t > 1) {
      alpha = joint * alpha;
      discount *= mdp.discount();
    }
    const double mass = discount * alpha.dot(mdp.reward());
    if (prefix > 0.0 && mass <= eta * prefix) return {t, true};
    prefix += mass;
  }
  return {cap, false};
}

}  // namespace mcpq
