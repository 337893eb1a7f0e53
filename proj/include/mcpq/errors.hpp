#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mcpq {

/// Malformed or invariant-violating input (bad dimensions, rows that do not
/// sum to one, negative rewards, ...). `field()` names the offending item.
class InputError : public std::invalid_argument {
 public:
  InputError(std::string field, const std::string& what)
      : std::invalid_argument(field.empty() ? what : field + ": " + what),
        field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Every reward-bearing component has zero mass, so the reward-weighted
/// distribution is undefined.
class ZeroUtilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Brute-force enumeration refused because the instance is too large.
class EnumerationLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iteration cap hit before a convergence criterion was met.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate, std::string diagnostic)
      : std::runtime_error(what + " (" + diagnostic + ")"),
        last_(std::move(last_iterate)),
        diagnostic_(std::move(diagnostic)) {}
  const Eigen::VectorXd& last_iterate() const noexcept { return last_; }
  const std::string& diagnostic() const noexcept { return diagnostic_; }

 private:
  Eigen::VectorXd last_;
  std::string diagnostic_;
};

/// A numerical invariant broke (loss of positive definiteness, failed
/// factorization of a matrix that should be invertible).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mcpq
