#include "doctest.h"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "fixtures.hpp"
#include "mcpq/brute_force.hpp"
#include "mcpq/chain.hpp"
#include "mcpq/forward_backward.hpp"
#include "mcpq/q_inference.hpp"

using namespace mcpq;
using mcpq::test::max_abs_diff;

namespace {

// Dominant (unit eigenvalue) eigenvector of the column-stochastic joint,
// normalized to a distribution.
StateActionVector eigen_stationary(const Eigen::MatrixXd& joint) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(joint);
  Eigen::Index best = 0;
  (es.eigenvalues().array() - 1.0).abs().minCoeff(&best);
  StateActionVector v = es.eigenvectors().col(best).real();
  return v / v.sum();
}

// sum_{k=0}^{terms-1} gamma^k R^k mu.
StateActionVector neumann_series(const StateActionVector& mu, const Eigen::MatrixXd& reversal, double gamma,
                                 int terms) {
  StateActionVector total = StateActionVector::Zero(mu.size());
  StateActionVector term = mu;
  for (int k = 0; k < terms; ++k) {
    total += term;
    term = gamma * (reversal * term);
  }
  return total;
}

}  // namespace

TEST_CASE("q component term") {
  SUBCASE("single pair") {
    const auto mdp = test::one_state_mdp(1.0, 0.5);
    CHECK(q_component_term(Eigen::VectorXd::Ones(1), mdp, 2, 1.5)(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("chain start pair carries no reward") {
    const auto mdp = make_chain({3, 0.95});
    const auto alpha = initial_message(mdp, TabularPolicy::uniform(3, 3));
    CHECK(q_component_term(alpha, mdp, 1, 1.0).isZero());
  }
  SUBCASE("seeded 2x2 equals the brute-force diagonal component") {
    const auto inst = test::seeded_instance(2, 2, 51);
    const auto table = brute_force_marginals(inst.mdp, inst.policy, 4);
    const auto alpha = forward_messages(inst.mdp, inst.policy, 4);
    for (int tau = 1; tau <= 4; ++tau) {
      const auto i = static_cast<std::size_t>(tau - 1);
      CHECK(max_abs_diff(q_component_term(alpha[i], inst.mdp, tau, table.utility), table.joint[i][i]) <= 1e-12);
    }
  }
}

TEST_CASE("finite-horizon Q-functions") {
  SUBCASE("single pair") {
    const auto qf = q_functions_finite(test::one_state_mdp(1.0, 0.5), TabularPolicy::uniform(1, 1), 2);
    CHECK(qf.q[1](0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(qf.q[0](0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(q_policy_statistic(qf)(0) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("seeded 2x2, H=5, every Q_tau is the brute-force tail sum") {
    const auto inst = test::seeded_instance(2, 2, 53);
    const auto table = brute_force_marginals(inst.mdp, inst.policy, 5);
    const auto qf = q_functions_finite(inst.mdp, inst.policy, 5);
    for (int tau = 1; tau <= 5; ++tau)
      CHECK(max_abs_diff(qf.q[static_cast<std::size_t>(tau - 1)], table.tail_sum(tau)) <= 1e-10);
  }
  SUBCASE("chain right policy selects right then stay") {
    const int n = 6;
    const auto mdp = make_chain({n, 0.95});
    const auto stat = q_policy_statistic(q_functions_finite(mdp, chain_right_policy(n), 3 * n));
    CHECK(max_abs_diff(stat, fb_policy_statistic(mdp, chain_right_policy(n), 3 * n)) <= 1e-10);
    for (int s = 1; s < n; ++s) {
      Eigen::Index best = 0;
      stat.segment(s * 3, 3).maxCoeff(&best);
      CHECK(best == (s == n - 1 ? kStay : kRight));
    }
  }
  SUBCASE("H=1 is the normalized immediate-reward product") {
    const auto inst = test::seeded_instance(3, 3, 55);
    StateActionVector expected = initial_message(inst.mdp, inst.policy).cwiseProduct(inst.mdp.reward());
    expected /= expected.sum();
    CHECK(max_abs_diff(q_policy_statistic(q_functions_finite(inst.mdp, inst.policy, 1)), expected) <= 1e-15);
  }
}

TEST_CASE("Q-function normalization") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = test::seeded_instance(3, 2, 600 + seed);
    const int horizon = 3 + static_cast<int>(seed);
    const auto qf = q_functions_finite(inst.mdp, inst.policy, horizon);
    CHECK(std::abs(qf.q[0].sum() - 1.0) <= 1e-10);
    double tail = 0.0;
    for (int tau = horizon; tau >= 1; --tau) {
      tail += qf.weight[static_cast<std::size_t>(tau - 1)];
      CHECK(std::abs(qf.q[static_cast<std::size_t>(tau - 1)].sum() - tail) <= 1e-10);
    }
  }
}

TEST_CASE("Q statistic equals the forward-backward statistic") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const int states = 1 + static_cast<int>(seed % 5);
    const int actions = 1 + static_cast<int>((seed / 5) % 5);
    const int horizon = 1 + static_cast<int>((seed * 7) % 20);
    const auto inst = test::seeded_instance(states, actions, 700 + seed);
    const auto q = q_policy_statistic(q_functions_finite(inst.mdp, inst.policy, horizon));
    const auto fb = fb_policy_statistic(inst.mdp, inst.policy, horizon);
    CHECK(max_abs_diff(q, fb) <= 1e-10);
  }
}

TEST_CASE("Q recursion cost is linear in the horizon") {
  const auto inst = test::seeded_instance(4, 2, 2);
  for (int h : {8, 16, 32, 64}) {
    OpCounter ops;
    q_functions_finite(inst.mdp, inst.policy, h, &ops);
    const auto hh = static_cast<std::uint64_t>(h);
    CHECK(ops.matvec == 2 * (hh - 1));
    CHECK(ops.products == hh);
  }
}

TEST_CASE("Q-functions correspond to classical policy evaluation") {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const auto inst = test::seeded_instance(3, 2, 800 + seed);
    const int horizon = 8;
    const auto qf = q_functions_finite(inst.mdp, inst.policy, horizon);
    const auto alpha = forward_messages(inst.mdp, inst.policy, horizon);
    for (int tau = 1; tau <= horizon; ++tau) {
      const auto classical =
          classical_policy_evaluation(inst.mdp, inst.policy, Horizon::finite(horizon - tau + 1));
      const StateActionVector rhs =
          std::pow(inst.mdp.discount(), tau - 1) * alpha[static_cast<std::size_t>(tau - 1)].cwiseProduct(classical);
      CHECK(max_abs_diff(qf.utility * qf.q[static_cast<std::size_t>(tau - 1)], rhs) <= 1e-9);
    }
  }
}

TEST_CASE("stationary distribution") {
  SUBCASE("single pair") {
    const auto st = stationary_distribution(test::one_state_mdp(), TabularPolicy::uniform(1, 1), 1e-9, 10);
    CHECK(st.alpha(0) == 1.0);
    CHECK(st.tau_hat == 1);
  }
  SUBCASE("periodic swap does not converge") {
    Eigen::VectorXd init(2);
    init << 1.0, 0.0;
    const auto mdp = test::swap_mdp(init);
    try {
      stationary_distribution(mdp, TabularPolicy::uniform(2, 1), 1e-6, 50);
      FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
      CHECK(e.diagnostic().find("period 2") != std::string::npos);
      CHECK(e.last_iterate().size() == 2);
    }
  }
  SUBCASE("ergodic 3-state matches the dominant eigenvector") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto inst = test::seeded_instance(3, 2, 900 + seed);
      const double tol = 1e-12;
      const auto st = stationary_distribution(inst.mdp, inst.policy, tol, 100000);
      const auto joint = joint_transition(inst.mdp, inst.policy);
      CHECK((joint * st.alpha - st.alpha).lpNorm<Eigen::Infinity>() <= tol);
      CHECK(max_abs_diff(st.alpha, eigen_stationary(joint)) <= 1e-10);
      CHECK(static_cast<int>(st.prefix.size()) == st.tau_hat);
    }
  }
}

TEST_CASE("stationary Q direct solve") {
  SUBCASE("scalar") {
    const Eigen::VectorXd mu = Eigen::VectorXd::Constant(1, 0.5);
    CHECK(stationary_q_direct(mu, Eigen::MatrixXd::Ones(1, 1), 0.5)(0) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("symmetric 2-state ergodic chain against the Neumann series") {
    Eigen::MatrixXd t(2, 2);
    t << 0.7, 0.3, 0.3, 0.7;
    Eigen::VectorXd r(2);
    r << 1.0, 0.0;
    Eigen::VectorXd p1(2);
    p1 << 0.5, 0.5;
    const DiscreteMDP mdp(2, 1, p1, t, r, 0.9);
    const TabularPolicy pi = TabularPolicy::uniform(2, 1);
    const auto joint = joint_transition(mdp, pi);
    const auto reverse = stationary_reversal(p1, joint);
    const double u = 0.5 / (1 - 0.9);
    const StateActionVector mu = p1.cwiseProduct(r) / u;
    CHECK(max_abs_diff(stationary_q_direct(mu, reverse, 0.9), neumann_series(mu, reverse, 0.9, 100000)) <= 1e-9);
  }
  SUBCASE("chain right policy concentrates on the right stay") {
    const auto mdp = make_chain({3, 0.95});
    const auto pi = chain_right_policy(3);
    const auto st = stationary_distribution(mdp, pi, 1e-12, 100);
    const auto reverse = stationary_reversal(st.alpha, joint_transition(mdp, pi));
    const StateActionVector mu = st.alpha.cwiseProduct(mdp.reward()) / 400.0;
    const auto q = stationary_q_direct(mu, reverse, 0.95);
    CHECK(max_abs_diff(q, neumann_series(mu, reverse, 0.95, 2000)) <= 1e-9);
    for (int z = 0; z < 9; ++z) CHECK((q(z) > 0.0) == (z == 2 * 3 + kStay));
  }
}

TEST_CASE("stationary Q fixed point") {
  SUBCASE("scalar") {
    const Eigen::VectorXd mu = Eigen::VectorXd::Constant(1, 0.5);
    const auto r = stationary_q_fixed_point(mu, Eigen::MatrixXd::Ones(1, 1), 0.5, 1e-12, 1000);
    CHECK(r.q(0) == doctest::Approx(1.0).epsilon(1e-11));
    CHECK(r.iterations <= 45);
  }
  SUBCASE("no discount returns the source") {
    Eigen::VectorXd mu(2);
    mu << 0.25, 0.75;
    Eigen::MatrixXd rev(2, 2);
    rev << 0.5, 0.5, 0.5, 0.5;
    const auto r = stationary_q_fixed_point(mu, rev, 0.0, 1e-12, 10);
    CHECK(r.iterations == 1);
    CHECK(max_abs_diff(r.q, mu) == 0.0);
  }
  SUBCASE("matches the direct solve on ergodic instances") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto inst = test::seeded_instance(3, 2, 950 + seed, 0.9);
      const auto st = stationary_distribution(inst.mdp, inst.policy, 1e-13, 100000);
      const auto reverse = stationary_reversal(st.alpha, joint_transition(inst.mdp, inst.policy));
      const StateActionVector mu = st.alpha.cwiseProduct(inst.mdp.reward()) * (1 - 0.9) / st.alpha.dot(inst.mdp.reward());
      const double tol = 1e-9;
      const auto fp = stationary_q_fixed_point(mu, reverse, 0.9, tol, 100000);
      CHECK(max_abs_diff(fp.q, stationary_q_direct(mu, reverse, 0.9)) <= 1e-8);
      CHECK(max_abs_diff(fp.q, stationary_q_direct(mu, reverse, 0.9)) <= 10 * tol);
    }
  }
  SUBCASE("cap exhaustion") {
    const Eigen::VectorXd mu = Eigen::VectorXd::Constant(1, 0.5);
    CHECK_THROWS_AS(stationary_q_fixed_point(mu, Eigen::MatrixXd::Ones(1, 1), 0.99, 1e-12, 3), ConvergenceError);
  }
}

TEST_CASE("infinite-horizon Q statistic") {
  SUBCASE("single pair is the mean of the geometric mixture") {
    const auto r = q_statistic_infinite(test::one_state_mdp(1.0, 0.5), TabularPolicy::uniform(1, 1));
    CHECK(r.statistic(0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(r.stationary.utility == doctest::Approx(2.0).epsilon(1e-14));
  }
  SUBCASE("ergodic instances match a long finite truncation") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const double gamma = 0.9;
      const auto inst = test::seeded_instance(3, 2, 1000 + seed, gamma);
      InfiniteOptions opts;
      opts.tol = 1e-13;
      const auto inf = q_statistic_infinite(inst.mdp, inst.policy, opts);
      const int horizon = static_cast<int>(std::ceil(std::log(1e-13) / std::log(gamma)));
      const auto fin = q_policy_statistic(q_functions_finite(inst.mdp, inst.policy, horizon));
      CHECK(max_abs_diff(inf.statistic, fin) <= 1e-8);
      CHECK(std::abs(inf.q[0].sum() - 1.0) <= 1e-10);

      opts.solver = StationarySolver::FixedPoint;
      const auto via_fp = q_statistic_infinite(inst.mdp, inst.policy, opts);
      CHECK(max_abs_diff(via_fp.statistic, inf.statistic) <= 1e-8);
    }
  }
  SUBCASE("chain right policy moves right at every reachable interior state") {
    const int n = 10;
    const auto mdp = make_chain({n, 0.95});
    const auto r = q_statistic_infinite(mdp, chain_right_policy(n));
    CHECK(r.stationary.utility == doctest::Approx(400.0).epsilon(1e-12));
    const auto fin = q_policy_statistic(q_functions_finite(mdp, chain_right_policy(n), 1200));
    CHECK(max_abs_diff(r.statistic, fin) <= 1e-8);
    for (int s = 1; s < n; ++s) {
      Eigen::Index best = 0;
      r.statistic.segment(s * 3, 3).maxCoeff(&best);
      CHECK(best == (s == n - 1 ? kStay : kRight));
    }
  }
  SUBCASE("periodic chains propagate the convergence error") {
    Eigen::VectorXd init(2);
    init << 1.0, 0.0;
    InfiniteOptions opts;
    opts.cap = 100;
    CHECK_THROWS_AS(q_statistic_infinite(test::swap_mdp(init), TabularPolicy::uniform(2, 1), opts), ConvergenceError);
  }
}

TEST_CASE("Q-functions decay geometrically after stationarity") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double gamma = 0.9;
    const auto inst = test::seeded_instance(3, 2, 1100 + seed, gamma);
    const double tol = 1e-6;
    const auto st = stationary_distribution(inst.mdp, inst.policy, tol, 100000);
    const int horizon = st.tau_hat + 400;
    const auto qf = q_functions_finite(inst.mdp, inst.policy, horizon);
    const auto i = static_cast<std::size_t>(st.tau_hat - 1);
    CHECK((qf.q[i + 1] - gamma * qf.q[i]).lpNorm<Eigen::Infinity>() <= 10 * tol);
  }
}
