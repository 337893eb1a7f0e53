#include "mcpq/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "mcpq/errors.hpp"
#include "mcpq/forward_backward.hpp"
#include "mcpq/log.hpp"
#include "mcpq/q_inference.hpp"
#include "mcpq/random.hpp"

namespace mcpq {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Round-trippable decimal; NaN is written as "nan".
std::string num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  const int workers = std::clamp(jobs, 1, count);
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------- chain

std::string to_string(ChainMethod method) {
  return method == ChainMethod::QInfinite ? "q-infinite" : "time-marginal";
}

ChainExperimentResult run_chain_experiment(const ChainExperimentSpec& spec) {
  if (spec.restarts < 1) throw InputError("restarts", "must be at least 1");
  for (int n : spec.lengths)
    if (n < 3) throw InputError("N", "chain length must be at least 3, got " + std::to_string(n));

  struct Method {
    ChainMethod kind;
    double eta;
  };
  std::vector<Method> methods{{ChainMethod::QInfinite, 0.0}};
  for (double eta : spec.etas) {
    if (!(eta > 0.0 && eta < 1.0)) throw InputError("eta", "must lie in (0, 1)");
    methods.push_back({ChainMethod::TimeMarginal, eta});
  }

  std::vector<ChainRun> runs;
  for (int n : spec.lengths)
    for (const auto& m : methods)
      for (int r = 0; r < spec.restarts; ++r)
        runs.push_back({n, m.kind, m.eta, spec.seed + static_cast<std::uint64_t>(r), 0.0, 0.0, 0});

  parallel_for(static_cast<int>(runs.size()), spec.jobs, [&](int i) {
    ChainRun& run = runs[static_cast<std::size_t>(i)];
    const DiscreteMDP mdp = make_chain({run.length, spec.discount});
    InferenceConfig config;
    config.horizon = Horizon::infinite();
    config.stationary_tol = spec.stationary_tol;
    if (run.method == ChainMethod::QInfinite) {
      config.backend = Backend::QInference;
    } else {
      config.backend = Backend::ForwardBackward;
      config.eta = run.eta;
    }
    Rng rng(run.seed);
    const TabularPolicy init = random_tabular_policy(mdp.num_states(), mdp.num_actions(), rng);
    try {
      const SolveReport report = em_solve(mdp, init, config, spec.em);
      run.final_utility = report.final_utility();
      run.max_decrease = report.max_decrease();
      run.iterations = static_cast<int>(report.iterations.size()) - 1;
    } catch (const std::exception& e) {
      run.final_utility = std::numeric_limits<double>::quiet_NaN();
      log_warn("chain N=" + std::to_string(run.length) + " " + to_string(run.method) + " seed " +
               std::to_string(run.seed) + " failed: " + e.what());
    }
  });

  ChainExperimentResult result;
  const double optimum = 400.0;
  std::size_t k = 0;
  for (int n : spec.lengths) {
    for (const auto& m : methods) {
      ChainSummary s{n, m.kind, m.eta, 0, 0.0, 0.0, 0};
      double sum = 0.0, sum_sq = 0.0;
      for (int r = 0; r < spec.restarts; ++r, ++k) {
        const double u = runs[k].final_utility;
        if (std::isnan(u)) continue;
        ++s.runs;
        sum += u;
        sum_sq += u * u;
        if (std::abs(u - optimum) <= 1e-4) ++s.hits;
      }
      if (s.runs > 0) {
        s.mean = sum / s.runs;
        s.stddev = std::sqrt(std::max(0.0, sum_sq / s.runs - s.mean * s.mean));
      } else {
        s.mean = s.stddev = std::numeric_limits<double>::quiet_NaN();
      }
      result.summary.push_back(s);
    }
  }
  result.runs = std::move(runs);
  return result;
}

void write_chain_csv(std::ostream& os, const std::vector<ChainRun>& runs) {
  os << "N,method,eta,seed,final_utility\n";
  for (const auto& r : runs)
    os << r.length << ',' << to_string(r.method) << ',' << num(r.eta) << ',' << r.seed << ','
       << num(r.final_utility) << '\n';
}

void write_chain_summary_csv(std::ostream& os, const std::vector<ChainSummary>& summary) {
  os << "N,method,eta,runs,mean,std,hits\n";
  for (const auto& s : summary)
    os << s.length << ',' << to_string(s.method) << ',' << num(s.eta) << ',' << s.runs << ',' << num(s.mean)
       << ',' << num(s.stddev) << ',' << s.hits << '\n';
}

// ---------------------------------------------------------- manipulator

ManipulatorInstance make_manipulator(const ManipulatorSpec& spec, std::uint64_t seed) {
  if (spec.links < 1) throw InputError("links", "must be at least 1");
  if (!(spec.dt > 0.0)) throw InputError("dt", "must be positive");
  if (spec.horizon < 1) throw InputError("horizon", "must be positive");
  if (!(spec.cov_max > 0.0)) throw InputError("cov_max", "must be positive");

  const int n = spec.links;
  const int ns = 2 * n, na = n;
  Rng rng(seed);
  auto cov_diag = [&](int dim) {
    Eigen::VectorXd d(dim);
    for (int i = 0; i < dim; ++i) d(i) = spec.cov_max * rng.uniform_open_low();
    return Eigen::MatrixXd(d.asDiagonal());
  };

  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(ns, ns);
  a.topRightCorner(n, n) = spec.dt * Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(ns, na);
  b.bottomRows(n) = spec.dt * Eigen::MatrixXd::Identity(n, n);

  // Draw order is part of the seeded contract: Sigma0, Sigma, targets, L, K, m, pi_sigma.
  Eigen::MatrixXd sigma0 = cov_diag(ns);
  Eigen::MatrixXd sigma = cov_diag(ns);
  LinearGaussianMDP model(Eigen::VectorXd::Zero(ns), std::move(sigma0), std::move(a), std::move(b),
                          std::move(sigma), spec.discount);

  Eigen::VectorXd target = Eigen::VectorXd::Zero(ns + na);
  for (int i = 0; i < n; ++i) target(i) = rng.uniform(spec.target_low, spec.target_high);
  MixtureReward reward;
  reward.projection = Eigen::MatrixXd::Identity(ns + na, ns + na);
  reward.components.push_back({1.0, std::move(target), cov_diag(ns + na)});

  GaussianPolicy policy;
  policy.gain.resize(na, ns);
  for (Eigen::Index i = 0; i < policy.gain.size(); ++i) policy.gain(i) = rng.uniform(-spec.gain_range, spec.gain_range);
  policy.offset.resize(na);
  for (int i = 0; i < na; ++i) policy.offset(i) = rng.uniform(-spec.gain_range, spec.gain_range);
  policy.variance = rng.uniform(spec.pi_sigma_low, spec.pi_sigma_high);

  return {std::move(model), std::move(policy), std::move(reward), spec.horizon};
}

ManipulatorExperimentResult run_manipulator_experiment(const ManipulatorExperimentSpec& spec) {
  if (spec.backends.empty()) throw InputError("backends", "need at least one backend");
  const std::size_t nb = spec.backends.size();
  const std::size_t total = spec.seeds.size() * nb;
  std::vector<ContinuousReport> reports(total);
  std::vector<char> ok(total, 0);

  parallel_for(static_cast<int>(total), spec.jobs, [&](int i) {
    const auto idx = static_cast<std::size_t>(i);
    const std::uint64_t seed = spec.seeds[idx / nb];
    const Backend backend = spec.backends[idx % nb];
    try {
      const ManipulatorInstance inst = make_manipulator(spec.arm, seed);
      ContinuousEmOptions opts;
      opts.backend = backend;
      opts.budget_s = spec.budget_s;
      opts.max_iters = spec.max_iters;
      opts.tol = -1.0;  // run for the whole budget
      reports[idx] = continuous_em_solve(inst.model, inst.policy, inst.reward, inst.horizon, opts);
      ok[idx] = 1;
    } catch (const std::exception& e) {
      log_warn("manipulator seed " + std::to_string(seed) + " backend " + to_string(backend) +
               " failed: " + e.what());
    }
  });

  ManipulatorExperimentResult result;
  for (std::size_t si = 0; si < spec.seeds.size(); ++si) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < nb; ++b)
      if (ok[si * nb + b])
        for (const auto& it : reports[si * nb + b].iterations) best = std::max(best, it.log_utility);
    for (std::size_t b = 0; b < nb; ++b) {
      if (!ok[si * nb + b]) continue;
      for (const auto& it : reports[si * nb + b].iterations)
        result.rows.push_back({spec.seeds[si], spec.backends[b], it.wall_ms / 1000.0, it.iter, it.log_utility,
                               std::exp(it.log_utility - best)});
    }
  }
  std::stable_sort(result.rows.begin(), result.rows.end(), [](const ManipulatorRow& x, const ManipulatorRow& y) {
    if (x.seed != y.seed) return x.seed < y.seed;
    if (x.backend != y.backend) return to_string(x.backend) < to_string(y.backend);
    return x.iter < y.iter;
  });
  result.reports = std::move(reports);
  return result;
}

void write_manipulator_csv(std::ostream& os, const std::vector<ManipulatorRow>& rows) {
  os << "seed,backend,wall_s,iter,norm_utility\n";
  for (const auto& r : rows)
    os << r.seed << ',' << to_string(r.backend) << ',' << num(r.wall_s) << ',' << r.iter << ','
       << num(r.norm_utility) << '\n';
}

// -------------------------------------------------------------- scaling

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("slope", "need at least two matching points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

ScalingResult run_scaling_study(const ScalingSpec& spec) {
  if (spec.horizons.empty()) throw InputError("horizons", "need at least one horizon");
  if (spec.repeats < 1) throw InputError("repeats", "must be at least 1");
  const DiscreteMDP mdp = random_mdp(spec.num_states, spec.num_actions, spec.discount, spec.seed);
  Rng rng(spec.seed + 1);
  const TabularPolicy policy = random_tabular_policy(spec.num_states, spec.num_actions, rng);

  ScalingResult result;
  std::vector<double> hs, fb_ops, q_ops, fb_ms, q_ms;
  for (int h : spec.horizons) {
    if (h < 1) throw InputError("horizons", "must be positive");
    OpCounter fb_count, q_count;
    StateActionVector fb_stat, q_stat;
    double fb_best = std::numeric_limits<double>::infinity(), q_best = fb_best;
    for (int r = 0; r < spec.repeats; ++r) {
      fb_count.reset();
      auto start = Clock::now();
      fb_stat = fb_policy_statistic(mdp, policy, h, &fb_count);
      fb_best = std::min(fb_best, elapsed_ms(start));

      q_count.reset();
      start = Clock::now();
      q_stat = q_policy_statistic(q_functions_finite(mdp, policy, h, &q_count));
      q_best = std::min(q_best, elapsed_ms(start));
    }
    result.max_statistic_diff = std::max(result.max_statistic_diff, (fb_stat - q_stat).cwiseAbs().maxCoeff());
    result.rows.push_back({h, Backend::ForwardBackward, fb_count.message_ops(), fb_best});
    result.rows.push_back({h, Backend::QInference, q_count.message_ops(), q_best});
    hs.push_back(h);
    fb_ops.push_back(static_cast<double>(fb_count.message_ops()));
    q_ops.push_back(static_cast<double>(q_count.message_ops()));
    fb_ms.push_back(fb_best);
    q_ms.push_back(q_best);
  }
  if (hs.size() >= 2) {
    result.fb_op_slope = log_log_slope(hs, fb_ops);
    result.q_op_slope = log_log_slope(hs, q_ops);
    result.fb_wall_slope = log_log_slope(hs, fb_ms);
    result.q_wall_slope = log_log_slope(hs, q_ms);
  }
  return result;
}

void write_scaling_csv(std::ostream& os, const std::vector<ScalingRow>& rows) {
  os << "H,method,matvecs,wall_ms\n";
  for (const auto& r : rows)
    os << r.horizon << ',' << to_string(r.method) << ',' << r.ops << ',' << num(r.wall_ms) << '\n';
}

}  // namespace mcpq
