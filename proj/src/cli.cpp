#include "mcpq/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "mcpq/errors.hpp"
#include "mcpq/experiments.hpp"
#include "mcpq/io.hpp"
#include "mcpq/log.hpp"
#include "mcpq/random.hpp"
#include "mcpq/verify.hpp"

namespace mcpq {

namespace {

// Flat JSON config: {"backend": "q", "eta": [0.01], ...}. Keys may use
// underscores for dashes.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::stringstream buf;
    buf << input.rdbuf();
    const Json j = parse_json(buf.str(), "config");
    if (!j.is_object()) throw InputError("config", "expected a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.name = key;
      std::replace(item.name.begin(), item.name.end(), '_', '-');
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v, key));
      } else {
        item.inputs.push_back(scalar(value, key));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const Json& v, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    throw InputError("config." + key, "expected a string, number or boolean");
  }
};

struct RunConfig {
  std::string input;
  std::string bench_kind;
  std::string backend = "q";
  std::string horizon = "100";
  std::string solver = "em";
  std::uint64_t seed = 0;
  std::vector<double> etas{0.01};
  double tol = 1e-8;
  double stationary_tol = 0.01;
  int max_iters = 500;
  double budget = -1.0;  // seconds; negative: command default
  int jobs = 1;
  std::string out_dir;
  double gamma = 0.95;
  std::string lengths = "3..10";
  int restarts = 100;
  int seeds = 5;
  std::vector<int> horizons{64, 128, 256, 512, 1024, 2048};
  int states = 10;
  int repeats = 3;
  std::string fixture;
  double tolerance = -1.0;
};

Horizon parse_horizon(const std::string& text) {
  if (text == "inf" || text == "infinite") return Horizon::infinite();
  const auto h = parse_int_range(text, "horizon");
  if (h.size() != 1) throw InputError("horizon", "expected a positive integer or 'inf'");
  return Horizon::finite(h[0]);
}

std::filesystem::path output_dir(const RunConfig& cfg) {
  std::filesystem::path dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("out", "cannot create '" + dir.string() + "': " + ec.message());
  return dir;
}

template <class Writer>
void write_csv(const std::filesystem::path& path, Writer&& writer) {
  std::ostringstream os;
  writer(os);
  write_text_file(path.string(), os.str());
}

int exit_for(Termination t) {
  return t == Termination::MaxIterations || t == Termination::BudgetExhausted ? kExitBudget : kExitOk;
}

std::string fmt(double v, int digits = 10) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

int solve_discrete(const RunConfig& cfg, const DiscreteProblem& problem, std::ostream& out) {
  const DiscreteMDP& mdp = problem.mdp;
  InferenceConfig config;
  config.backend = parse_backend(cfg.backend);
  config.horizon = parse_horizon(cfg.horizon);
  config.stationary_tol = cfg.stationary_tol;
  if (cfg.etas.size() != 1) throw InputError("eta", "solve takes a single value");
  config.eta = cfg.etas[0];

  TabularPolicy init = problem.policy.value_or(TabularPolicy::uniform(mdp.num_states(), mdp.num_actions()));
  if (!problem.policy) {
    Rng rng(cfg.seed);
    init = random_tabular_policy(mdp.num_states(), mdp.num_actions(), rng);
  }

  SolveReport report;
  if (cfg.solver == "em") {
    EmOptions opts;
    opts.tol = cfg.tol;
    opts.max_iters = cfg.max_iters;
    report = em_solve(mdp, init, config, opts);
  } else {
    PgOptions opts;
    opts.tol = cfg.tol;
    opts.max_iters = cfg.max_iters;
    const Eigen::MatrixXd logits = init.table().array().max(1e-300).log().matrix();
    report = pg_solve(mdp, SoftmaxPolicy(logits), config, opts).report;
  }

  const auto dir = output_dir(cfg);
  write_csv(dir / "report.csv", [&](std::ostream& os) { write_report_csv(os, report); });
  Json policy = Json::object();
  policy["policy"] = to_json(report.final_policy);
  write_text_file((dir / "policy.json").string(), dump(policy));

  out << "model: discrete, " << mdp.num_states() << " states, " << mdp.num_actions() << " actions\n"
      << "solver: " << cfg.solver << ", backend: " << report.backend << ", horizon: " << report.horizon_mode << '\n'
      << "iterations: " << report.iterations.size() - 1 << '\n'
      << "initial utility: " << fmt(report.iterations.front().utility) << '\n'
      << "final utility: " << fmt(report.final_utility()) << '\n'
      << "termination: " << to_string(report.termination) << '\n'
      << "wrote " << (dir / "report.csv").string() << ", " << (dir / "policy.json").string() << '\n';
  return exit_for(report.termination);
}

int solve_continuous(const RunConfig& cfg, const ContinuousProblem& problem, std::ostream& out) {
  const Horizon horizon = parse_horizon(cfg.horizon);
  if (!horizon.is_finite()) throw InputError("horizon", "continuous models need a finite horizon");
  if (cfg.solver != "em") throw InputError("solver", "continuous models support only em");
  ContinuousEmOptions opts;
  opts.backend = parse_backend(cfg.backend);
  opts.max_iters = cfg.max_iters;
  opts.budget_s = std::max(0.0, cfg.budget);
  opts.tol = cfg.tol;
  const auto report = continuous_em_solve(problem.model, problem.policy, problem.reward, horizon.steps(), opts);

  const auto dir = output_dir(cfg);
  write_csv(dir / "report.csv", [&](std::ostream& os) { write_report_csv(os, report); });
  Json policy = Json::object();
  policy["policy"] = to_json(report.final_policy);
  write_text_file((dir / "policy.json").string(), dump(policy));

  out << "model: continuous, n_s = " << problem.model.state_dim() << ", n_a = " << problem.model.action_dim() << '\n'
      << "solver: em, backend: " << report.backend << ", horizon: finite:" << report.horizon << '\n'
      << "iterations: " << report.iterations.size() - 1 << '\n'
      << "initial log utility: " << fmt(report.iterations.front().log_utility) << '\n'
      << "final log utility: " << fmt(report.final_log_utility()) << '\n'
      << "termination: " << to_string(report.termination) << '\n'
      << "wrote " << (dir / "report.csv").string() << ", " << (dir / "policy.json").string() << '\n';
  return exit_for(report.termination);
}

int cmd_solve(const RunConfig& cfg, std::ostream& out) {
  const Problem problem = problem_from_json(read_json_file(cfg.input));
  if (const auto* d = std::get_if<DiscreteProblem>(&problem)) return solve_discrete(cfg, *d, out);
  return solve_continuous(cfg, std::get<ContinuousProblem>(problem), out);
}

int bench_chain(const RunConfig& cfg, std::ostream& out) {
  ChainExperimentSpec spec;
  spec.lengths = parse_int_range(cfg.lengths, "n");
  spec.discount = cfg.gamma;
  spec.restarts = cfg.restarts;
  spec.seed = cfg.seed;
  spec.stationary_tol = cfg.stationary_tol;
  spec.etas = cfg.etas;
  spec.em.tol = cfg.tol;
  spec.em.max_iters = cfg.max_iters;
  spec.jobs = cfg.jobs;
  const auto result = run_chain_experiment(spec);

  const auto dir = output_dir(cfg);
  write_csv(dir / "chain_results.csv", [&](std::ostream& os) { write_chain_csv(os, result.runs); });
  write_csv(dir / "chain_summary.csv", [&](std::ostream& os) { write_chain_summary_csv(os, result.summary); });
  out << "N    method         eta      mean        std         hits/runs\n";
  for (const auto& s : result.summary) {
    out << std::left << std::setw(5) << s.length << std::setw(15) << to_string(s.method) << std::setw(9)
        << (s.method == ChainMethod::QInfinite ? std::string("-") : fmt(s.eta)) << std::setw(12) << fmt(s.mean, 8)
        << std::setw(12) << fmt(s.stddev, 4) << s.hits << '/' << s.runs << '\n';
  }
  out << std::right << "wrote " << (dir / "chain_results.csv").string() << '\n';
  return kExitOk;
}

int bench_manipulator(const RunConfig& cfg, std::ostream& out) {
  const Horizon horizon = parse_horizon(cfg.horizon);
  if (!horizon.is_finite()) throw InputError("horizon", "the manipulator needs a finite horizon");
  if (cfg.seeds < 1) throw InputError("seeds", "must be at least 1");
  ManipulatorExperimentSpec spec;
  spec.arm.horizon = horizon.steps();
  spec.seeds.clear();
  for (int i = 0; i < cfg.seeds; ++i) spec.seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
  spec.budget_s = cfg.budget < 0.0 ? 30.0 : cfg.budget;
  if (spec.budget_s == 0.0) spec.max_iters = cfg.max_iters;
  spec.jobs = cfg.jobs;
  const auto result = run_manipulator_experiment(spec);

  const auto dir = output_dir(cfg);
  write_csv(dir / "manipulator_results.csv", [&](std::ostream& os) { write_manipulator_csv(os, result.rows); });
  const std::size_t nb = spec.backends.size();
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    const auto& r = result.reports[i];
    if (r.iterations.empty()) continue;
    out << "seed " << spec.seeds[i / nb] << " backend " << r.backend << ": " << r.iterations.size() - 1
        << " iterations, final log utility " << fmt(r.final_log_utility()) << '\n';
  }
  out << "wrote " << (dir / "manipulator_results.csv").string() << '\n';
  return kExitOk;
}

int bench_scaling(const RunConfig& cfg, std::ostream& out) {
  ScalingSpec spec;
  spec.num_states = cfg.states;
  spec.seed = cfg.seed;
  spec.horizons = cfg.horizons;
  spec.repeats = cfg.repeats;
  const auto result = run_scaling_study(spec);
  const auto dir = output_dir(cfg);
  write_csv(dir / "scaling.csv", [&](std::ostream& os) { write_scaling_csv(os, result.rows); });
  out << "counted-op slope: fb " << fmt(result.fb_op_slope) << ", q " << fmt(result.q_op_slope) << '\n'
      << "wall-time slope: fb " << fmt(result.fb_wall_slope) << ", q " << fmt(result.q_wall_slope) << '\n'
      << "max |fb - q| statistic difference: " << fmt(result.max_statistic_diff) << '\n'
      << "wrote " << (dir / "scaling.csv").string() << '\n';
  return kExitOk;
}

int emit(const RunConfig& cfg, const Json& j, const std::string& filename, std::ostream& out) {
  const std::string text = dump(j);
  if (cfg.out_dir.empty()) {
    out << text;
  } else {
    const auto path = output_dir(cfg) / filename;
    write_text_file(path.string(), text);
    out << "wrote " << path.string() << '\n';
  }
  return kExitOk;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out) {
  if (cfg.bench_kind == "chain") return bench_chain(cfg, out);
  if (cfg.bench_kind == "manipulator") return bench_manipulator(cfg, out);
  if (cfg.bench_kind == "scaling") return bench_scaling(cfg, out);
  if (cfg.bench_kind == "emit-chain") {
    const auto n = parse_int_range(cfg.lengths, "n");
    if (n.size() != 1) throw InputError("n", "emit-chain takes a single chain length");
    return emit(cfg, to_json(DiscreteProblem{make_chain({n[0], cfg.gamma}), std::nullopt}),
                "chain_" + std::to_string(n[0]) + ".json", out);
  }
  // emit-manipulator
  const auto inst = make_manipulator(ManipulatorSpec{}, cfg.seed);
  return emit(cfg, to_json(ContinuousProblem{inst.model, inst.policy, inst.reward}),
              "manipulator_" + std::to_string(cfg.seed) + ".json", out);
}

int cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::optional<std::string> fixture;
  if (!cfg.fixture.empty()) fixture = cfg.fixture;
  std::optional<double> tol;
  if (cfg.tolerance >= 0.0) tol = cfg.tolerance;
  const auto checks = run_verification(fixture, tol);
  const VerificationCheck* first_failure = nullptr;
  int failures = 0;
  for (const auto& c : checks) {
    out << (c.pass ? "PASS " : "FAIL ") << c.fixture << ": " << c.name << "  residual=" << std::scientific
        << std::setprecision(3) << c.residual << " tolerance=" << c.tolerance << std::defaultfloat << '\n';
    if (!c.pass) {
      ++failures;
      if (!first_failure) first_failure = &c;
    }
  }
  out << checks.size() - static_cast<std::size_t>(failures) << '/' << checks.size() << " checks passed\n";
  if (first_failure) {
    err << "verification failed: " << first_failure->fixture << ": " << first_failure->name << '\n';
    return kExitVerify;
  }
  return kExitOk;
}

}  // namespace

std::vector<int> parse_int_range(const std::string& text, const std::string& field) {
  auto to_int = [&](const std::string& s) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (s.empty() || pos != s.size() || v < 1) throw InputError(field, "expected positive integers, got '" + text + "'");
    return v;
  };
  std::vector<int> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const int lo = to_int(text.substr(0, dots));
    const int hi = to_int(text.substr(dots + 2));
    if (hi < lo) throw InputError(field, "empty range '" + text + "'");
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(to_int(part));
  if (out.empty()) throw InputError(field, "expected at least one value");
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Policy inference and optimization for MDPs"};
  app.name("mcpq");
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with option values (flags take precedence)");
  app.allow_config_extras(CLI::config_extras_mode::error);

  app.add_option("--backend", cfg.backend, "Inference backend")->check(CLI::IsMember({"fb", "q"}))->capture_default_str();
  app.add_option("--horizon", cfg.horizon, "Planning horizon: a positive integer or 'inf'")->capture_default_str();
  app.add_option("--solver", cfg.solver, "Policy optimizer")->check(CLI::IsMember({"em", "pg"}))->capture_default_str();
  app.add_option("--seed", cfg.seed, "Seed for random initial policies and benchmark instances")->capture_default_str();
  app.add_option("--eta", cfg.etas, "Time-marginal cut-off(s) for fb on infinite horizons")->delimiter(',')->capture_default_str();
  app.add_option("--tol", cfg.tol, "Stop when the utility changes by at most this much")->capture_default_str();
  app.add_option("--stationary-tol", cfg.stationary_tol, "Stationarity threshold on forward messages")->capture_default_str();
  app.add_option("--max-iters", cfg.max_iters, "Iteration limit")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--budget", cfg.budget, "Wall-clock budget in seconds (continuous EM; manipulator default 30)");
  app.add_option("--jobs", cfg.jobs, "Worker threads for benchmarks")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--out", cfg.out_dir, "Output directory (default: current directory; emit-*: stdout)");
  app.add_option("--gamma", cfg.gamma, "Chain discount")->capture_default_str();
  app.add_option("--n", cfg.lengths, "Chain lengths: '3..10', '3,5,8' or '5'")->capture_default_str();
  app.add_option("--restarts", cfg.restarts, "Random restarts per chain length")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--seeds", cfg.seeds, "Number of manipulator seeds, starting at --seed")->capture_default_str();
  app.add_option("--horizons", cfg.horizons, "Scaling-study horizons")->delimiter(',')->capture_default_str();
  app.add_option("--states", cfg.states, "Scaling-study state count")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--repeats", cfg.repeats, "Scaling-study timing repeats")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--fixture", cfg.fixture, "Run one verification fixture")
      ->check(CLI::IsMember(verification_fixtures()));
  app.add_option("--tolerance", cfg.tolerance, "Override every verification tolerance")->check(CLI::NonNegativeNumber);

  auto* solve = app.add_subcommand("solve", "Optimize a policy for a model file")->fallthrough();
  solve->add_option("input", cfg.input, "Model JSON (discrete or continuous)")->required();
  auto* bench = app.add_subcommand("bench", "Run a benchmark or emit a benchmark model")->fallthrough();
  bench->add_option("kind", cfg.bench_kind, "chain | manipulator | scaling | emit-chain | emit-manipulator")
      ->required()
      ->check(CLI::IsMember({"chain", "manipulator", "scaling", "emit-chain", "emit-manipulator"}));
  auto* verify = app.add_subcommand("verify", "Run the built-in oracle checks")->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInput;
  } catch (const InputError& e) {  // malformed config file
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    if (bench->parsed() && cfg.bench_kind == "emit-chain" && app.get_option("--n")->count() == 0 &&
        cfg.lengths == "3..10")
      cfg.lengths = "3";
    log_debug("running " + std::string(solve->parsed() ? "solve" : bench->parsed() ? "bench" : "verify"));
    if (solve->parsed()) return cmd_solve(cfg, out);
    if (bench->parsed()) return cmd_bench(cfg, out);
    if (verify->parsed()) return cmd_verify(cfg, out, err);
    return kExitInput;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ZeroUtilityError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBudget;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace mcpq
