#include "mcpq/brute_force.hpp"

#include <cmath>
#include <limits>

namespace mcpq {

StateActionVector BruteForceTable::conditional(int tau, int t) const {
  const double w = weight.at(static_cast<std::size_t>(t - 1));
  if (w <= 0.0) throw ZeroUtilityError("component has zero mass");
  return joint.at(static_cast<std::size_t>(t - 1)).at(static_cast<std::size_t>(tau - 1)) / w;
}

StateActionVector BruteForceTable::double_sum() const {
  StateActionVector total = StateActionVector::Zero(joint.front().front().size());
  for (const auto& row : joint)
    for (const auto& v : row) total += v;
  return total;
}

StateActionVector BruteForceTable::tail_sum(int tau) const {
  StateActionVector total = StateActionVector::Zero(joint.front().front().size());
  for (int t = tau; t <= horizon; ++t)
    total += joint[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(tau - 1)];
  return total;
}

std::uint64_t enumeration_size(const DiscreteMDP& mdp, int horizon) {
  const double z = mdp.num_pairs();
  double total = 0.0;
  double layer = 1.0;
  for (int t = 1; t <= horizon; ++t) {
    layer *= z;
    total += layer;
    if (total > static_cast<double>(std::numeric_limits<std::uint64_t>::max() / 2))
      return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(total);
}

namespace {

struct Enumerator {
  const DiscreteMDP& mdp;
  const TabularPolicy& policy;
  BruteForceTable& table;
  std::vector<int> path;

  void visit(int depth, double prob, double discount) {
    const int last = path[static_cast<std::size_t>(depth - 1)];
    const auto t = static_cast<std::size_t>(depth - 1);
    table.unconditional[t](last) += prob;
    const double w = discount * mdp.reward()(last) * prob;
    if (w > 0.0) {
      table.weight[t] += w;
      for (int tau = 0; tau < depth; ++tau) {
        table.joint[t][static_cast<std::size_t>(tau)](path[static_cast<std::size_t>(tau)]) += w;
        if (tau + 1 < depth)
          table.pair[t][static_cast<std::size_t>(tau)](path[static_cast<std::size_t>(tau)],
                                                        path[static_cast<std::size_t>(tau) + 1]) += w;
      }
    }
    if (depth == table.horizon) return;
    const int na = mdp.num_actions();
    const int s = last / na;
    const int a = last % na;
    for (int s2 = 0; s2 < mdp.num_states(); ++s2) {
      const double ps = mdp.transition(s, a, s2);
      if (ps == 0.0) continue;
      for (int a2 = 0; a2 < na; ++a2) {
        const double pa = policy(s2, a2);
        if (pa == 0.0) continue;
        path[static_cast<std::size_t>(depth)] = s2 * na + a2;
        visit(depth + 1, prob * ps * pa, discount * mdp.discount());
      }
    }
  }
};

}  // namespace

BruteForceTable brute_force_marginals(const DiscreteMDP& mdp, const TabularPolicy& policy,
                                      int horizon, std::uint64_t cap) {
  check_compatible(mdp, policy);
  if (horizon < 1) throw InputError("horizon", "must be at least 1");
  if (enumeration_size(mdp, horizon) > cap)
    throw EnumerationLimitError("instance exceeds the brute-force enumeration cap");

  const int n = mdp.num_pairs();
  BruteForceTable table;
  table.horizon = horizon;
  table.weight.assign(static_cast<std::size_t>(horizon), 0.0);
  table.joint.resize(static_cast<std::size_t>(horizon));
  table.pair.resize(static_cast<std::size_t>(horizon));
  table.unconditional.assign(static_cast<std::size_t>(horizon), StateActionVector::Zero(n));
  for (int t = 1; t <= horizon; ++t) {
    table.joint[static_cast<std::size_t>(t - 1)].assign(static_cast<std::size_t>(t), StateActionVector::Zero(n));
    table.pair[static_cast<std::size_t>(t - 1)].assign(static_cast<std::size_t>(t - 1), Eigen::MatrixXd::Zero(n, n));
  }

  Enumerator walker{mdp, policy, table, std::vector<int>(static_cast<std::size_t>(horizon))};
  const int na = mdp.num_actions();
  for (int s = 0; s < mdp.num_states(); ++s) {
    for (int a = 0; a < na; ++a) {
      const double p = mdp.initial()(s) * policy(s, a);
      if (p == 0.0) continue;
      walker.path[0] = s * na + a;
      walker.visit(1, p, 1.0);
    }
  }

  for (double w : table.weight) table.utility += w;
  if (table.utility <= 0.0) throw ZeroUtilityError("no reachable reward within the horizon");
  for (auto& w : table.weight) w /= table.utility;
  for (auto& row : table.joint)
    for (auto& v : row) v /= table.utility;
  for (auto& row : table.pair)
    for (auto& m : row) m /= table.utility;
  return table;
}

}  // namespace mcpq
