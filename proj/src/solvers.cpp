#include "mcpq/solvers.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "mcpq/forward_backward.hpp"
#include "mcpq/log.hpp"
#include "mcpq/random.hpp"

namespace mcpq {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

std::string to_string(Backend backend) { return backend == Backend::QInference ? "q" : "fb"; }

Backend parse_backend(const std::string& name) {
  if (name == "q") return Backend::QInference;
  if (name == "fb") return Backend::ForwardBackward;
  throw InputError("backend", "expected 'fb' or 'q', got '" + name + "'");
}

std::string InferenceConfig::horizon_mode() const {
  if (horizon.is_finite()) return "finite:" + std::to_string(horizon.steps());
  return "infinite";
}

std::string to_string(Termination reason) {
  switch (reason) {
    case Termination::Converged: return "converged";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::LineSearchFailed: return "line_search_failed";
    case Termination::BudgetExhausted: return "budget_exhausted";
  }
  return "unknown";
}

PolicyStatistic policy_statistic(const DiscreteMDP& mdp, const TabularPolicy& policy,
                                 const InferenceConfig& config, OpCounter* ops) {
  PolicyStatistic out;
  if (config.horizon.is_finite()) {
    const int h = config.horizon.steps();
    out.effective_horizon = h;
    if (config.backend == Backend::ForwardBackward) {
      out.values = fb_policy_statistic(mdp, policy, h, ops, &out.utility);
    } else {
      const QFunctions qf = q_functions_finite(mdp, policy, h, ops);
      out.values = q_policy_statistic(qf);
      out.utility = qf.utility;
    }
    return out;
  }
  if (config.backend == Backend::QInference) {
    InfiniteOptions opts;
    opts.tol = config.stationary_tol;
    opts.cap = config.stationary_cap;
    InfiniteQResult r = q_statistic_infinite(mdp, policy, opts, ops);
    out.values = std::move(r.statistic);
    out.utility = r.stationary.utility;
    out.effective_horizon = r.stationary.tau_hat;
    return out;
  }
  const TimeMarginalCut cut = time_marginal_horizon(mdp, policy, config.eta, config.eta_cap);
  if (!cut.triggered) log_warn("time-marginal criterion did not fire before the cap; truncating at cap");
  out.effective_horizon = cut.horizon;
  out.values = fb_policy_statistic(mdp, policy, cut.horizon, ops, &out.utility);
  return out;
}

double evaluate_utility(const DiscreteMDP& mdp, const TabularPolicy& policy, const Horizon& horizon) {
  return policy_value(mdp, policy, horizon);
}

TabularPolicy em_update(const TabularPolicy& policy, const StateActionVector& statistic) {
  Eigen::MatrixXd table = policy.table();
  const int na = policy.num_actions();
  for (int s = 0; s < policy.num_states(); ++s) {
    const auto row = statistic.segment(s * na, na);
    const double mass = row.sum();
    if (mass > 0.0) table.row(s) = row.transpose() / mass;
  }
  return TabularPolicy(std::move(table));
}

TabularPolicy em_step_tabular(const DiscreteMDP& mdp, const TabularPolicy& policy,
                              const InferenceConfig& config, OpCounter* ops) {
  return em_update(policy, policy_statistic(mdp, policy, config, ops).values);
}

double SolveReport::max_decrease() const {
  double worst = 0.0;
  for (std::size_t i = 1; i < iterations.size(); ++i)
    worst = std::max(worst, iterations[i - 1].utility - iterations[i].utility);
  return worst;
}

void write_report_csv(std::ostream& os, const SolveReport& report) {
  os << "iter,utility,wall_ms,matvec_count,backend,horizon_mode\n";
  const auto precision = os.precision(17);
  for (const auto& it : report.iterations) {
    os << it.iter << ',' << it.utility << ',' << it.wall_ms << ',' << it.matvec_count << ','
       << report.backend << ',' << report.horizon_mode << '\n';
  }
  os.precision(precision);
}

SolveReport em_solve(const DiscreteMDP& mdp, const TabularPolicy& init, const InferenceConfig& config,
                     const EmOptions& options) {
  SolveReport report;
  report.backend = to_string(config.backend);
  report.horizon_mode = config.horizon_mode();
  double u = evaluate_utility(mdp, init, config.horizon);
  if (!(u > 0.0))
    throw ZeroUtilityError("initial policy has zero utility; try a randomized initialization");
  report.iterations.push_back({0, u, 0.0, 0});
  if (mdp.num_actions() == 1) {  // only one policy exists
    report.termination = Termination::Converged;
    report.final_policy = init;
    return report;
  }

  TabularPolicy policy = init;
  OpCounter ops;
  report.termination = Termination::MaxIterations;
  for (int k = 1; k <= options.max_iters; ++k) {
    const auto start = Clock::now();
    policy = em_step_tabular(mdp, policy, config, &ops);
    const double wall = elapsed_ms(start);
    const double next = evaluate_utility(mdp, policy, config.horizon);
    report.iterations.push_back({k, next, wall, ops.message_ops()});
    const double gain = next - u;
    u = next;
    if (std::abs(gain) <= options.tol) {
      report.termination = Termination::Converged;
      break;
    }
  }
  report.final_policy = policy;
  return report;
}

std::vector<SolveReport> em_solve_restarts(const DiscreteMDP& mdp, const InferenceConfig& config,
                                           const EmOptions& options, int restarts, std::uint64_t seed) {
  std::vector<SolveReport> out;
  out.reserve(static_cast<std::size_t>(restarts));
  for (int r = 0; r < restarts; ++r) {
    Rng rng(seed + static_cast<std::uint64_t>(r));
    out.push_back(em_solve(mdp, random_tabular_policy(mdp.num_states(), mdp.num_actions(), rng), config, options));
  }
  return out;
}

SoftmaxPolicy::SoftmaxPolicy(Eigen::MatrixXd logits) : logits_(std::move(logits)) {
  if (logits_.size() == 0 || !logits_.allFinite()) throw InputError("logits", "must be finite and non-empty");
}

TabularPolicy SoftmaxPolicy::table() const {
  Eigen::MatrixXd table(logits_.rows(), logits_.cols());
  for (Eigen::Index s = 0; s < logits_.rows(); ++s) {
    const Eigen::RowVectorXd shifted = logits_.row(s).array() - logits_.row(s).maxCoeff();
    const Eigen::RowVectorXd e = shifted.array().exp();
    table.row(s) = e / e.sum();
  }
  return TabularPolicy(std::move(table));
}

Eigen::MatrixXd policy_gradient(const DiscreteMDP& mdp, const SoftmaxPolicy& policy,
                                const InferenceConfig& config, OpCounter* ops) {
  const TabularPolicy table = policy.table();
  const StateActionVector stat = policy_statistic(mdp, table, config, ops).values;
  const int na = mdp.num_actions();
  Eigen::MatrixXd grad(mdp.num_states(), na);
  for (int s = 0; s < mdp.num_states(); ++s) {
    const double mass = stat.segment(s * na, na).sum();
    for (int a = 0; a < na; ++a) grad(s, a) = stat(s * na + a) - table(s, a) * mass;
  }
  return grad;
}

PgReport pg_solve(const DiscreteMDP& mdp, const SoftmaxPolicy& init, const InferenceConfig& config,
                  const PgOptions& options) {
  if (!(options.initial_step > 0.0) || !(options.shrink > 0.0 && options.shrink < 1.0))
    throw InputError("step", "step sizes must be positive and the shrink factor in (0, 1)");
  PgReport out;
  SolveReport& report = out.report;
  report.backend = to_string(config.backend);
  report.horizon_mode = config.horizon_mode();

  Eigen::MatrixXd logits = init.logits();
  double u = evaluate_utility(mdp, SoftmaxPolicy(logits).table(), config.horizon);
  if (!(u > 0.0)) throw ZeroUtilityError("initial policy has zero utility");
  report.iterations.push_back({0, u, 0.0, 0});
  out.logit_history.push_back(logits);

  OpCounter ops;
  report.termination = Termination::MaxIterations;
  for (int k = 1; k <= options.max_iters; ++k) {
    const auto start = Clock::now();
    const Eigen::MatrixXd grad = policy_gradient(mdp, SoftmaxPolicy(logits), config, &ops);
    if (grad.lpNorm<Eigen::Infinity>() <= options.grad_tol) {
      report.termination = Termination::Converged;
      break;
    }
    const double slope = grad.squaredNorm();
    const double log_u = std::log(u);
    double step = options.initial_step;
    bool accepted = false;
    double next_u = u;
    Eigen::MatrixXd candidate;
    for (int b = 0; b <= options.max_backtracks; ++b, step *= options.shrink) {
      candidate = logits + step * grad;
      next_u = evaluate_utility(mdp, SoftmaxPolicy(candidate).table(), config.horizon);
      if (next_u > 0.0 && std::log(next_u) >= log_u + options.armijo * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      report.termination = Termination::LineSearchFailed;
      break;
    }
    logits = candidate;
    report.iterations.push_back({k, next_u, elapsed_ms(start), ops.message_ops()});
    out.logit_history.push_back(logits);
    const double gain = next_u - u;
    u = next_u;
    if (gain <= options.tol) {
      report.termination = Termination::Converged;
      break;
    }
  }
  out.final_logits = SoftmaxPolicy(logits);
  report.final_policy = out.final_logits.table();
  return out;
}

}  // namespace mcpq
