#include "mcpq/verify.hpp"

#include <cmath>
#include <functional>

#include "mcpq/brute_force.hpp"
#include "mcpq/chain.hpp"
#include "mcpq/continuous.hpp"
#include "mcpq/errors.hpp"
#include "mcpq/forward_backward.hpp"
#include "mcpq/oracles.hpp"
#include "mcpq/q_inference.hpp"
#include "mcpq/random.hpp"
#include "mcpq/solvers.hpp"

namespace mcpq {

namespace {

double max_abs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

class Collector {
 public:
  Collector(std::string fixture, std::optional<double> override_tol, std::vector<VerificationCheck>& out)
      : fixture_(std::move(fixture)), override_(override_tol), out_(out) {}

  void add(std::string name, double residual, double tolerance) {
    const double tol = override_.value_or(tolerance);
    out_.push_back({fixture_, std::move(name), residual, tol, std::isfinite(residual) && residual <= tol});
  }

 private:
  std::string fixture_;
  std::optional<double> override_;
  std::vector<VerificationCheck>& out_;
};

void statistic_checks(Collector& c, const std::string& label, const DiscreteMDP& mdp, const TabularPolicy& policy,
                      int horizon) {
  const auto brute = brute_force_marginals(mdp, policy, horizon);
  double u_fb = 0.0;
  const auto fb = fb_policy_statistic(mdp, policy, horizon, nullptr, &u_fb);
  const auto qf = q_functions_finite(mdp, policy, horizon);
  const auto q = q_policy_statistic(qf);
  c.add(label + " fb statistic vs brute force", max_abs(fb, brute.double_sum()), 1e-9);
  c.add(label + " q statistic vs brute force", max_abs(q, brute.double_sum()), 1e-9);
  c.add(label + " q statistic vs fb", max_abs(q, fb), 1e-10);
  double tail = 0.0;
  for (int tau = 1; tau <= horizon; ++tau)
    tail = std::max(tail, max_abs(qf.q[static_cast<std::size_t>(tau - 1)], brute.tail_sum(tau)));
  c.add(label + " Q_tau vs brute-force tail sums", tail, 1e-9);
  c.add(label + " utility vs brute force", std::abs(qf.utility - brute.utility) / brute.utility, 1e-12);
}

void chain3(Collector& c) {
  const DiscreteMDP mdp = make_chain({3, 0.95});
  statistic_checks(c, "chain3 uniform H=6", mdp, TabularPolicy::uniform(3, 3), 6);
  const Horizon inf = Horizon::infinite();
  c.add("chain3 U(left) = 20", std::abs(policy_value(mdp, chain_left_policy(3), inf) - 20.0), 1e-8);
  c.add("chain3 U(right) = 400", std::abs(policy_value(mdp, chain_right_policy(3), inf) - 400.0), 1e-8);
}

void random_instances(Collector& c) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DiscreteMDP mdp = random_mdp(3, 2, 0.9, 7000 + seed);
    Rng rng(seed);
    const TabularPolicy policy = random_tabular_policy(3, 2, rng);
    statistic_checks(c, "random seed " + std::to_string(seed) + " H=5", mdp, policy, 5);

    InfiniteOptions opts;
    opts.tol = 1e-13;
    const auto inf = q_statistic_infinite(mdp, policy, opts);
    const auto truncated = q_policy_statistic(q_functions_finite(mdp, policy, 400));
    c.add("random seed " + std::to_string(seed) + " infinite q vs truncation at H=400",
          max_abs(inf.statistic, truncated) / truncated.cwiseAbs().maxCoeff(), 1e-8);
  }
}

void gradient(Collector& c) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const DiscreteMDP mdp = random_mdp(3, 2, 0.9, 8000 + seed);
    Rng rng(seed);
    Eigen::MatrixXd logits(3, 2);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits(i) = rng.normal();
    InferenceConfig config;
    config.horizon = Horizon::finite(6);
    for (Backend b : {Backend::ForwardBackward, Backend::QInference}) {
      config.backend = b;
      const auto g = policy_gradient(mdp, SoftmaxPolicy(logits), config);
      auto log_u = [&](const Eigen::MatrixXd& l) { return std::log(utility(mdp, SoftmaxPolicy(l).table(), config.horizon)); };
      Eigen::MatrixXd fd(3, 2);
      const double h = 1e-6;
      for (Eigen::Index i = 0; i < logits.size(); ++i) {
        Eigen::MatrixXd up = logits, down = logits;
        up(i) += h;
        down(i) -= h;
        fd(i) = (log_u(up) - log_u(down)) / (2 * h);
      }
      c.add("seed " + std::to_string(seed) + " " + to_string(b) + " gradient vs central differences (relative)",
            max_abs(g, fd) / fd.cwiseAbs().maxCoeff(), 1e-5);
    }
  }
}

void continuous(Collector& c) {
  const LinearGaussianMDP model(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 0.1),
                                Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Constant(1, 1, 0.5),
                                Eigen::MatrixXd::Constant(1, 1, 0.05), 0.95);
  const GaussianPolicy policy{Eigen::MatrixXd::Constant(1, 1, -0.2), Eigen::VectorXd::Constant(1, 0.1), 1.0};
  MixtureReward reward;
  reward.projection = Eigen::MatrixXd::Identity(2, 2);
  reward.components.push_back({1.0, Eigen::Vector2d(1.0, 0.0), Eigen::Matrix2d::Identity() * 0.5});
  reward.components.push_back({0.5, Eigen::Vector2d(-0.5, 0.3), Eigen::Matrix2d::Identity() * 0.8});
  const int horizon = 4;

  const QMoments q = q_moment_recursion(model, policy, reward, horizon);
  const QMoments fb = fb_moment_baseline(model, policy, reward, horizon);
  const auto quad = oracle::quadrature_q_moments(model, policy, reward, horizon, 30);
  double d_tail = 0.0, d_first = 0.0, d_second = 0.0;
  for (int t = 0; t < horizon; ++t) {
    const auto k = static_cast<std::size_t>(t);
    d_tail = std::max(d_tail, std::abs(q.tail[k] - quad.tail[k]));
    d_first = std::max(d_first, max_abs(q.first[k], quad.first[k]));
    d_second = std::max(d_second, max_abs(q.second[k], quad.second[k]));
  }
  c.add("1-d mass per tau vs quadrature", d_tail, 1e-6);
  c.add("1-d first moments vs quadrature", d_first, 1e-6);
  c.add("1-d second moments vs quadrature", d_second, 1e-6);
  c.add("1-d log utility vs quadrature", std::abs(q.log_utility - quad.log_utility), 1e-6);
  c.add("fb baseline vs recursion (aggregate first)", max_abs(fb.first_sum(), q.first_sum()), 1e-8);
  c.add("fb baseline vs recursion (aggregate second)", max_abs(fb.second_sum(), q.second_sum()), 1e-8);
}

using Fixture = std::pair<std::string, std::function<void(Collector&)>>;

const std::vector<Fixture>& fixtures() {
  static const std::vector<Fixture> all{
      {"chain3", chain3}, {"random", random_instances}, {"gradient", gradient}, {"continuous", continuous}};
  return all;
}

}  // namespace

std::vector<std::string> verification_fixtures() {
  std::vector<std::string> names;
  for (const auto& f : fixtures()) names.push_back(f.first);
  return names;
}

std::vector<VerificationCheck> run_verification(const std::optional<std::string>& fixture,
                                                std::optional<double> tolerance) {
  if (tolerance && !(*tolerance >= 0.0)) throw InputError("tolerance", "must be non-negative");
  std::vector<VerificationCheck> out;
  bool matched = false;
  for (const auto& [name, run] : fixtures()) {
    if (fixture && *fixture != name) continue;
    matched = true;
    Collector c(name, tolerance, out);
    run(c);
  }
  if (!matched) throw InputError("fixture", "unknown fixture '" + fixture.value_or("") + "'");
  return out;
}

}  // namespace mcpq
