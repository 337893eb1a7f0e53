#pragma once

// JSON problem files and policies.
//
// Discrete:   {num_states, num_actions, gamma, initial[s], transition[s][a][s'],
//              reward[s][a], policy[s][a] (optional)}
// Continuous: {n_s, n_a, mu0, Sigma0, A, B, Sigma, gamma,
//              policy{K, m, pi_sigma}, reward{components[{w, y, L}], M}}
// Matrices are arrays of rows. Emitting and re-loading a problem gives back
// the same text.

#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "mcpq/continuous.hpp"
#include "mcpq/mdp.hpp"

namespace mcpq {

using Json = nlohmann::ordered_json;

struct DiscreteProblem {
  DiscreteMDP mdp;
  std::optional<TabularPolicy> policy;
};

struct ContinuousProblem {
  LinearGaussianMDP model;
  GaussianPolicy policy;
  MixtureReward reward;
};

using Problem = std::variant<DiscreteProblem, ContinuousProblem>;

Json to_json(const DiscreteProblem& problem);
Json to_json(const ContinuousProblem& problem);
Json to_json(const TabularPolicy& policy);
Json to_json(const GaussianPolicy& policy);

/// Throw InputError naming the offending field ("transition[1][0]", "policy.K", ...).
DiscreteProblem discrete_from_json(const Json& j);
ContinuousProblem continuous_from_json(const Json& j);

/// Dispatches on the presence of `num_states` or `n_s`.
Problem problem_from_json(const Json& j);

/// Parse errors become InputError with the line and column.
Json parse_json(const std::string& text, const std::string& source = "input");
Json read_json_file(const std::string& path);

/// Two-space indented text with a trailing newline.
std::string dump(const Json& j);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace mcpq
