#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "mcpq/cli.hpp"
#include "mcpq/errors.hpp"
#include "mcpq/experiments.hpp"
#include "mcpq/io.hpp"
#include "mcpq/log.hpp"

using namespace mcpq;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("mcpq_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

double last_utility(const std::string& report_path) {
  const auto rows = lines(read_file(report_path));
  const std::string& last = rows.back();
  const auto a = last.find(',');
  return std::stod(last.substr(a + 1, last.find(',', a + 1) - a - 1));
}

const char* kOneState = R"({"num_states": 1, "num_actions": 1, "gamma": 0.5, "initial": [1.0],
  "transition": [[[1.0]]], "reward": [[1.0]]})";

}  // namespace

TEST_CASE("solve") {
  TempDir dir;
  SUBCASE("single pair converges with a one-row report") {
    write_file(dir / "one.json", kOneState);
    const auto r = cli({"solve", dir / "one.json", "--out", dir / "run"});
    CHECK(r.code == kExitOk);
    const auto rows = lines(read_file(dir / "run/report.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == "iter,utility,wall_ms,matvec_count,backend,horizon_mode");
    CHECK(rows[1].rfind("0,", 0) == 0);
    CHECK(rows[1].find(",q,finite:100") != std::string::npos);
    const Json policy = read_json_file(dir / "run/policy.json");
    CHECK(policy["policy"][0][0].get<double>() == 1.0);
    CHECK(r.out.find("termination: converged") != std::string::npos);
  }
  SUBCASE("emitted chain solved on the infinite horizon ends at one of the two optima") {
    const auto emitted = cli({"bench", "emit-chain", "--n", "5", "--out", dir / "models"});
    REQUIRE(emitted.code == kExitOk);
    for (const char* seed : {"2", "3"}) {
      const auto r = cli({"solve", dir / "models/chain_5.json", "--horizon", "inf", "--backend", "q", "--seed", seed,
                          "--max-iters", "5000", "--out", dir / "chain"});
      CHECK(r.code == kExitOk);
      const double u = last_utility(dir / "chain/report.csv");
      CHECK((std::abs(u - 400.0) <= 1e-4 || std::abs(u - 20.0) <= 1e-4));
    }
  }
  SUBCASE("policy gradient on a finite horizon") {
    cli({"bench", "emit-chain", "--n", "3", "--out", dir / "m"});
    const auto r = cli({"solve", dir / "m/chain_3.json", "--solver", "pg", "--horizon", "30", "--out", dir / "pg"});
    CHECK((r.code == kExitOk || r.code == kExitBudget));
    CHECK(r.out.find("solver: pg") != std::string::npos);
    CHECK(lines(read_file(dir / "pg/report.csv")).size() >= 2);
  }
  SUBCASE("iteration limit reports budget exhaustion") {
    cli({"bench", "emit-chain", "--n", "4", "--out", dir / "m"});
    const auto r = cli({"solve", dir / "m/chain_4.json", "--max-iters", "1", "--out", dir / "cap"});
    CHECK(r.code == kExitBudget);
    CHECK(lines(read_file(dir / "cap/report.csv")).size() == 3);
  }
  SUBCASE("truncated JSON names the position") {
    const std::string text = kOneState;
    write_file(dir / "cut.json", text.substr(0, text.size() / 2));
    const auto r = cli({"solve", dir / "cut.json", "--out", dir / "x"});
    CHECK(r.code == kExitInput);
    CHECK(r.err.find("line") != std::string::npos);
    CHECK(r.err.find("column") != std::string::npos);
  }
  SUBCASE("a missing key is named") {
    write_file(dir / "nokey.json", R"({"num_states": 1, "num_actions": 1, "gamma": 0.5, "initial": [1.0], "reward": [[1.0]]})");
    const auto r = cli({"solve", dir / "nokey.json"});
    CHECK(r.code == kExitInput);
    CHECK(r.err.find("transition: missing key") != std::string::npos);
  }
  SUBCASE("invariant violations name the field") {
    write_file(dir / "bad.json", R"({"num_states": 1, "num_actions": 1, "gamma": 0.5, "initial": [1.0],
      "transition": [[[0.7]]], "reward": [[1.0]]})");
    const auto r = cli({"solve", dir / "bad.json"});
    CHECK(r.code == kExitInput);
    CHECK(r.err.find("transition") != std::string::npos);
    write_file(dir / "shape.json", R"({"num_states": 2, "num_actions": 1, "gamma": 0.5, "initial": [1.0],
      "transition": [[[1.0, 0.0]], [[0.0, 1.0]]], "reward": [[1.0], [0.0]]})");
    CHECK(cli({"solve", dir / "shape.json"}).err.find("initial: expected 2 entries") != std::string::npos);
  }
  SUBCASE("continuous model") {
    REQUIRE(cli({"bench", "emit-manipulator", "--seed", "1", "--out", dir / "m"}).code == kExitOk);
    const auto inf = cli({"solve", dir / "m/manipulator_1.json", "--horizon", "inf"});
    CHECK(inf.code == kExitInput);
    CHECK(inf.err.find("horizon") != std::string::npos);
    CHECK(cli({"solve", dir / "m/manipulator_1.json", "--solver", "pg", "--horizon", "10"}).code == kExitInput);
    const auto r = cli({"solve", dir / "m/manipulator_1.json", "--horizon", "10", "--max-iters", "3", "--backend", "fb",
                        "--out", dir / "c"});
    CHECK(r.code == kExitBudget);
    const auto rows = lines(read_file(dir / "c/report.csv"));
    CHECK(rows.size() == 5);
    CHECK(rows[1].find(",fb,finite:10") != std::string::npos);
    const Json policy = read_json_file(dir / "c/policy.json");
    CHECK(policy["policy"]["K"].size() == 2);
    CHECK(policy["policy"]["K"][0].size() == 4);
  }
}

TEST_CASE("emitted models round-trip through the loader") {
  SUBCASE("chain") {
    const auto r = cli({"bench", "emit-chain", "--n", "3"});
    REQUIRE(r.code == kExitOk);
    const Problem p = problem_from_json(parse_json(r.out));
    REQUIRE(std::holds_alternative<DiscreteProblem>(p));
    CHECK(dump(to_json(std::get<DiscreteProblem>(p))) == r.out);
  }
  SUBCASE("manipulator") {
    const auto r = cli({"bench", "emit-manipulator", "--seed", "7"});
    REQUIRE(r.code == kExitOk);
    const Problem p = problem_from_json(parse_json(r.out));
    REQUIRE(std::holds_alternative<ContinuousProblem>(p));
    const auto& c = std::get<ContinuousProblem>(p);
    CHECK(dump(to_json(c)) == r.out);
    const auto direct = make_manipulator(ManipulatorSpec{}, 7);
    CHECK(c.policy.gain == direct.policy.gain);
    CHECK(c.model.sigma() == direct.model.sigma());
  }
  SUBCASE("discrete policy key") {
    DiscreteProblem d{make_chain({4, 0.9}), chain_right_policy(4)};
    const std::string text = dump(to_json(d));
    const auto back = discrete_from_json(parse_json(text));
    REQUIRE(back.policy.has_value());
    CHECK(back.policy->table() == chain_right_policy(4).table());
    CHECK(dump(to_json(back)) == text);
  }
  SUBCASE("continuous schema errors") {
    Json j = parse_json(cli({"bench", "emit-manipulator"}).out);
    j["policy"].erase("pi_sigma");
    CHECK_THROWS_WITH_AS(continuous_from_json(j), "policy.pi_sigma: missing key", InputError);
    j = parse_json(cli({"bench", "emit-manipulator"}).out);
    j["reward"]["components"][0]["L"][0][0] = -1.0;
    CHECK_THROWS_AS(continuous_from_json(j), InputError);
    CHECK_THROWS_AS(problem_from_json(parse_json("{}")), InputError);
  }
}

TEST_CASE("bench") {
  TempDir dir;
  SUBCASE("scaling rows") {
    const auto r = cli({"bench", "scaling", "--horizons", "64,128,256", "--repeats", "1", "--out", dir / "s"});
    CHECK(r.code == kExitOk);
    const auto rows = lines(read_file(dir / "s/scaling.csv"));
    CHECK(rows.size() == 7);
    CHECK(rows[0] == "H,method,matvecs,wall_ms");
  }
  SUBCASE("chain rows and determinism") {
    const auto a = cli({"bench", "chain", "--n", "3..10", "--restarts", "5", "--seed", "4", "--out", dir / "a"});
    const auto b = cli({"bench", "chain", "--n", "3..10", "--restarts", "5", "--seed", "4", "--jobs", "3", "--out", dir / "b"});
    CHECK(a.code == kExitOk);
    CHECK(b.code == kExitOk);
    const std::string csv = read_file(dir / "a/chain_results.csv");
    CHECK(lines(csv).size() == 1 + 2 * 8 * 5);
    CHECK(csv == read_file(dir / "b/chain_results.csv"));
    CHECK(read_file(dir / "a/chain_summary.csv") == read_file(dir / "b/chain_summary.csv"));
    CHECK(csv.find('\r') == std::string::npos);
  }
  SUBCASE("manipulator with an iteration limit") {
    const auto r = cli({"bench", "manipulator", "--seeds", "1", "--budget", "0", "--max-iters", "2", "--horizon", "20",
                        "--out", dir / "m"});
    CHECK(r.code == kExitOk);
    const auto rows = lines(read_file(dir / "m/manipulator_results.csv"));
    CHECK(rows.size() == 1 + 2 * 3);
    CHECK(rows[0] == "seed,backend,wall_s,iter,norm_utility");
  }
  SUBCASE("unknown kind") { CHECK(cli({"bench", "pendulum"}).code == kExitInput); }
}

TEST_CASE("verify") {
  SUBCASE("default fixtures pass") {
    const auto r = cli({"verify"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("FAIL") == std::string::npos);
    CHECK(r.out.find("tolerance=") != std::string::npos);
  }
  SUBCASE("over-tight tolerance fails") {
    const auto r = cli({"verify", "--tolerance", "1e-15"});
    CHECK(r.code == kExitVerify);
    CHECK(r.err.find("verification failed: ") != std::string::npos);
  }
  SUBCASE("single fixture") {
    const auto r = cli({"verify", "--fixture", "chain3"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("random") == std::string::npos);
    CHECK(cli({"verify", "--fixture", "nope"}).code == kExitInput);
  }
}

TEST_CASE("flags and config") {
  TempDir dir;
  write_file(dir / "one.json", kOneState);
  cli({"bench", "emit-chain", "--n", "4", "--out", dir.operator/("m")});
  const std::string model = dir / "m/chain_4.json";

  SUBCASE("config values apply when the flag is absent") {
    write_file(dir / "cfg.json", R"({"backend": "fb", "max_iters": 2, "horizon": "12"})");
    const auto r = cli({"solve", model, "--config", dir / "cfg.json", "--out", dir / "r"});
    CHECK(r.code == kExitBudget);
    const auto rows = lines(read_file(dir / "r/report.csv"));
    CHECK(rows.size() == 4);
    CHECK(rows[1].find(",fb,finite:12") != std::string::npos);
  }
  SUBCASE("flags override the config") {
    write_file(dir / "cfg.json", R"({"backend": "fb", "max_iters": 2})");
    const auto r = cli({"solve", model, "--config", dir / "cfg.json", "--max-iters", "3", "--backend", "q", "--out", dir / "r"});
    const auto rows = lines(read_file(dir / "r/report.csv"));
    CHECK(rows.size() == 5);
    CHECK(rows[1].find(",q,") != std::string::npos);
  }
  SUBCASE("bad config") {
    write_file(dir / "typo.json", R"({"bakend": "fb"})");
    CHECK(cli({"solve", model, "--config", dir / "typo.json"}).code == kExitInput);
    write_file(dir / "broken.json", R"({"backend": )");
    CHECK(cli({"solve", model, "--config", dir / "broken.json"}).code == kExitInput);
  }
  SUBCASE("bad flags") {
    CHECK(cli({"solve", model, "--backend", "xyz"}).code == kExitInput);
    CHECK(cli({"solve", model, "--horizon", "0"}).code == kExitInput);
    CHECK(cli({"solve", model, "--horizon", "abc"}).code == kExitInput);
    CHECK(cli({"solve", model, "--eta", "0.1,0.2"}).code == kExitInput);
    CHECK(cli({"solve", dir / "missing.json"}).code == kExitInput);
    CHECK(cli({}).code == kExitInput);
    CHECK(cli({"frobnicate"}).code == kExitInput);
  }
  SUBCASE("help") {
    const auto r = cli({"--help"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("solve") != std::string::npos);
  }
}

TEST_CASE("integer ranges") {
  CHECK(parse_int_range("3..6", "n") == std::vector<int>{3, 4, 5, 6});
  CHECK(parse_int_range("3,5,8", "n") == std::vector<int>{3, 5, 8});
  CHECK(parse_int_range("7", "n") == std::vector<int>{7});
  CHECK_THROWS_AS(parse_int_range("6..3", "n"), InputError);
  CHECK_THROWS_AS(parse_int_range("x", "n"), InputError);
  CHECK_THROWS_AS(parse_int_range("0", "n"), InputError);
  CHECK_THROWS_AS(parse_int_range("", "n"), InputError);
}

TEST_CASE("log level from the environment") {
  ::setenv("MCPQ_LOG", "debug", 1);
  CHECK(log_level() == LogLevel::Debug);
  ::setenv("MCPQ_LOG", "error", 1);
  CHECK(log_level() == LogLevel::Error);
  ::unsetenv("MCPQ_LOG");
  CHECK(log_level() == LogLevel::Warn);
}
