#pragma once

// Problem generators and experiment harnesses: the double reward chain,
// the feedback-linearized 2-link manipulator and the horizon scaling study.
// Every harness returns rows sorted by their key columns so the CSV output
// does not depend on the number of worker threads.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <numbers>
#include <string>
#include <vector>

#include "mcpq/chain.hpp"
#include "mcpq/continuous.hpp"
#include "mcpq/solvers.hpp"

namespace mcpq {

/// Runs fn(0..count-1) on at most `jobs` threads (jobs <= 1 runs inline).
/// The first exception thrown by a task is rethrown after all workers stop.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

// ---------------------------------------------------------------- chain

enum class ChainMethod { QInfinite, TimeMarginal };

std::string to_string(ChainMethod method);

struct ChainExperimentSpec {
  std::vector<int> lengths{3, 4, 5, 6, 7, 8, 9, 10};
  double discount = 0.95;
  int restarts = 100;
  std::uint64_t seed = 0;
  double stationary_tol = 0.01;
  std::vector<double> etas{0.01};
  EmOptions em{};
  int jobs = 1;
};

struct ChainRun {
  int length = 0;
  ChainMethod method = ChainMethod::QInfinite;
  double eta = 0.0;  // 0 for q-infinite
  std::uint64_t seed = 0;
  double final_utility = 0.0;  // NaN when the run failed
  double max_decrease = 0.0;
  int iterations = 0;
};

struct ChainSummary {
  int length = 0;
  ChainMethod method = ChainMethod::QInfinite;
  double eta = 0.0;
  int runs = 0;  // successful runs
  double mean = 0.0;
  double stddev = 0.0;  // population
  int hits = 0;  // runs ending within 1e-4 of the global optimum
};

struct ChainExperimentResult {
  std::vector<ChainRun> runs;
  std::vector<ChainSummary> summary;
};

/// Restart r of every (N, method) starts from the symmetric-Dirichlet(1)
/// policy drawn from seed + r, so all methods share their inits.
ChainExperimentResult run_chain_experiment(const ChainExperimentSpec& spec);

/// N,method,eta,seed,final_utility
void write_chain_csv(std::ostream& os, const std::vector<ChainRun>& runs);
/// N,method,eta,runs,mean,std,hits
void write_chain_summary_csv(std::ostream& os, const std::vector<ChainSummary>& summary);

// ---------------------------------------------------------- manipulator

struct ManipulatorSpec {
  int links = 2;
  double dt = 0.1;
  int horizon = 100;
  double target_low = std::numbers::pi / 4;
  double target_high = 3 * std::numbers::pi / 4;
  double gain_range = 1.0;  // K, m ~ U[-range, range]
  double pi_sigma_low = 1.0;
  double pi_sigma_high = 2.0;
  double cov_max = 0.05;  // diagonal covariance entries ~ U(0, cov_max]
  double discount = 0.99;
};

struct ManipulatorInstance {
  LinearGaussianMDP model;
  GaussianPolicy policy;
  MixtureReward reward;
  int horizon = 0;
};

/// Feedback-linearized arm: state (angles, velocities), action = joint
/// accelerations, angle' = angle + dt vel, vel' = vel + dt accel. One reward
/// component on the full state-action vector, centred on the sampled target
/// angles with zero velocity and acceleration.
ManipulatorInstance make_manipulator(const ManipulatorSpec& spec, std::uint64_t seed);

struct ManipulatorExperimentSpec {
  ManipulatorSpec arm{};
  std::vector<std::uint64_t> seeds{0};
  double budget_s = 30.0;
  int max_iters = 1000000;
  std::vector<Backend> backends{Backend::QInference, Backend::ForwardBackward};
  int jobs = 1;
};

struct ManipulatorRow {
  std::uint64_t seed = 0;
  Backend backend = Backend::QInference;
  double wall_s = 0.0;
  int iter = 0;
  double log_utility = 0.0;
  double norm_utility = 0.0;  // exp(log U - best log U seen for this seed)
};

struct ManipulatorExperimentResult {
  std::vector<ManipulatorRow> rows;
  std::vector<ContinuousReport> reports;  // seed-major, backends in spec order
};

ManipulatorExperimentResult run_manipulator_experiment(const ManipulatorExperimentSpec& spec);

/// seed,backend,wall_s,iter,norm_utility
void write_manipulator_csv(std::ostream& os, const std::vector<ManipulatorRow>& rows);

// -------------------------------------------------------------- scaling

struct ScalingSpec {
  int num_states = 10;
  int num_actions = 3;
  double discount = 0.95;
  std::uint64_t seed = 0;
  std::vector<int> horizons{64, 128, 256, 512, 1024, 2048};
  int repeats = 3;  // wall time is the minimum over repeats
};

struct ScalingRow {
  int horizon = 0;
  Backend method = Backend::QInference;
  std::uint64_t ops = 0;  // matrix-vector plus elementwise message products
  double wall_ms = 0.0;
};

struct ScalingResult {
  std::vector<ScalingRow> rows;
  double fb_op_slope = 0.0, q_op_slope = 0.0;
  double fb_wall_slope = 0.0, q_wall_slope = 0.0;
  double max_statistic_diff = 0.0;  // fb vs q over all horizons
};

ScalingResult run_scaling_study(const ScalingSpec& spec);

/// Least-squares slope of log y against log x.
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

/// H,method,matvecs,wall_ms
void write_scaling_csv(std::ostream& os, const std::vector<ScalingRow>& rows);

}  // namespace mcpq
