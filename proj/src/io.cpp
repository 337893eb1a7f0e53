#include "mcpq/io.hpp"

#include <fstream>
#include <sstream>

#include "mcpq/errors.hpp"

namespace mcpq {

namespace {

std::string at(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

const Json& member(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw InputError(path.empty() ? "document" : path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw InputError(at(path, key), "missing key");
  return *it;
}

double number(const Json& j, const std::string& field) {
  if (!j.is_number()) throw InputError(field, "expected a number");
  return j.get<double>();
}

int integer(const Json& j, const std::string& field) {
  if (!j.is_number_integer()) throw InputError(field, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < 1 || v > 1'000'000) throw InputError(field, "must be a positive integer");
  return static_cast<int>(v);
}

const Json& array(const Json& j, const std::string& field, std::size_t size) {
  if (!j.is_array()) throw InputError(field, "expected an array");
  if (j.size() != size)
    throw InputError(field, "expected " + std::to_string(size) + " entries, got " + std::to_string(j.size()));
  return j;
}

Eigen::VectorXd vector(const Json& j, const std::string& field, int size) {
  array(j, field, static_cast<std::size_t>(size));
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v(i) = number(j[static_cast<std::size_t>(i)], at(field, static_cast<std::size_t>(i)));
  return v;
}

Eigen::MatrixXd matrix(const Json& j, const std::string& field, int rows, int cols) {
  array(j, field, static_cast<std::size_t>(rows));
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    m.row(r) = vector(j[ri], at(field, ri), cols).transpose();
  }
  return m;
}

Json to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(to_json(Eigen::VectorXd(m.row(r).transpose())));
  return out;
}

}  // namespace

Json to_json(const TabularPolicy& policy) { return matrix_json(policy.table()); }

Json to_json(const GaussianPolicy& policy) {
  Json out = Json::object();
  out["K"] = matrix_json(policy.gain);
  out["m"] = to_json(policy.offset);
  out["pi_sigma"] = policy.variance;
  return out;
}

Json to_json(const DiscreteProblem& problem) {
  const DiscreteMDP& mdp = problem.mdp;
  const int ns = mdp.num_states(), na = mdp.num_actions();
  Json out = Json::object();
  out["num_states"] = ns;
  out["num_actions"] = na;
  out["gamma"] = mdp.discount();
  out["initial"] = to_json(mdp.initial());
  Json transition = Json::array();
  Json reward = Json::array();
  for (int s = 0; s < ns; ++s) {
    Json ts = Json::array();
    Json rs = Json::array();
    for (int a = 0; a < na; ++a) {
      ts.push_back(to_json(Eigen::VectorXd(mdp.transition().row(mdp.pair(s, a)).transpose())));
      rs.push_back(mdp.reward(s, a));
    }
    transition.push_back(std::move(ts));
    reward.push_back(std::move(rs));
  }
  out["transition"] = std::move(transition);
  out["reward"] = std::move(reward);
  if (problem.policy) out["policy"] = to_json(*problem.policy);
  return out;
}

DiscreteProblem discrete_from_json(const Json& j) {
  const int ns = integer(member(j, "num_states", ""), "num_states");
  const int na = integer(member(j, "num_actions", ""), "num_actions");
  const double gamma = number(member(j, "gamma", ""), "gamma");
  Eigen::VectorXd initial = vector(member(j, "initial", ""), "initial", ns);

  const Json& tj = array(member(j, "transition", ""), "transition", static_cast<std::size_t>(ns));
  const Json& rj = array(member(j, "reward", ""), "reward", static_cast<std::size_t>(ns));
  Eigen::MatrixXd transition(ns * na, ns);
  Eigen::VectorXd reward(ns * na);
  for (int s = 0; s < ns; ++s) {
    const auto si = static_cast<std::size_t>(s);
    transition.middleRows(s * na, na) = matrix(tj[si], at("transition", si), na, ns);
    reward.segment(s * na, na) = vector(rj[si], at("reward", si), na);
  }
  DiscreteProblem out{DiscreteMDP(ns, na, std::move(initial), std::move(transition), std::move(reward), gamma),
                      std::nullopt};
  if (j.contains("policy")) {
    out.policy = TabularPolicy(matrix(j["policy"], "policy", ns, na));
    check_compatible(out.mdp, *out.policy);
  }
  return out;
}

Json to_json(const ContinuousProblem& problem) {
  const auto& m = problem.model;
  Json out = Json::object();
  out["n_s"] = m.state_dim();
  out["n_a"] = m.action_dim();
  out["mu0"] = to_json(m.mu0());
  out["Sigma0"] = matrix_json(m.sigma0());
  out["A"] = matrix_json(m.a());
  out["B"] = matrix_json(m.b());
  out["Sigma"] = matrix_json(m.sigma());
  out["gamma"] = m.discount();
  out["policy"] = to_json(problem.policy);
  Json reward = Json::object();
  Json comps = Json::array();
  for (const auto& c : problem.reward.components) {
    Json cj = Json::object();
    cj["w"] = c.weight;
    cj["y"] = to_json(c.target);
    cj["L"] = matrix_json(c.cov);
    comps.push_back(std::move(cj));
  }
  reward["components"] = std::move(comps);
  reward["M"] = matrix_json(problem.reward.projection);
  out["reward"] = std::move(reward);
  return out;
}

ContinuousProblem continuous_from_json(const Json& j) {
  const int ns = integer(member(j, "n_s", ""), "n_s");
  const int na = integer(member(j, "n_a", ""), "n_a");
  LinearGaussianMDP model(vector(member(j, "mu0", ""), "mu0", ns), matrix(member(j, "Sigma0", ""), "Sigma0", ns, ns),
                          matrix(member(j, "A", ""), "A", ns, ns), matrix(member(j, "B", ""), "B", ns, na),
                          matrix(member(j, "Sigma", ""), "Sigma", ns, ns), number(member(j, "gamma", ""), "gamma"));

  const Json& pj = member(j, "policy", "");
  GaussianPolicy policy{matrix(member(pj, "K", "policy"), "policy.K", na, ns),
                        vector(member(pj, "m", "policy"), "policy.m", na),
                        number(member(pj, "pi_sigma", "policy"), "policy.pi_sigma")};
  policy.validate(model);

  const Json& rj = member(j, "reward", "");
  const Json& mj = member(rj, "M", "reward");
  if (!mj.is_array() || mj.empty()) throw InputError("reward.M", "expected a non-empty array of rows");
  const int rows = static_cast<int>(mj.size());
  MixtureReward reward;
  reward.projection = matrix(mj, "reward.M", rows, ns + na);
  const Json& cj = member(rj, "components", "reward");
  if (!cj.is_array()) throw InputError("reward.components", "expected an array");
  for (std::size_t k = 0; k < cj.size(); ++k) {
    const std::string path = at("reward.components", k);
    reward.components.push_back({number(member(cj[k], "w", path), at(path, "w")),
                                 vector(member(cj[k], "y", path), at(path, "y"), rows),
                                 matrix(member(cj[k], "L", path), at(path, "L"), rows, rows)});
  }
  reward.validate(ns + na);
  return {std::move(model), std::move(policy), std::move(reward)};
}

Problem problem_from_json(const Json& j) {
  if (!j.is_object()) throw InputError("document", "expected an object");
  if (j.contains("num_states")) return discrete_from_json(j);
  if (j.contains("n_s")) return continuous_from_json(j);
  throw InputError("document", "missing key: expected 'num_states' (discrete) or 'n_s' (continuous)");
}

Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // e.what() carries "line L, column C" for syntax errors.
    throw InputError(source, e.what());
  }
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path, "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_json(buf.str(), path);
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path, "cannot open for writing");
  out << text;
  if (!out) throw InputError(path, "write failed");
}

}  // namespace mcpq
