#pragma once

#include <stdexcept>
#include <string>

namespace qcs {

/// Invalid parameters or configuration (maps to CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A covariance that must be positive definite is singular or indefinite.
class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Least-squares system without full column rank.
class RankDeficient : public std::runtime_error {
 public:
  RankDeficient(const std::string& what, double condition)
      : std::runtime_error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

/// The residual ball {x : ||y - Ax|| <= eps} is empty.
class InfeasibleProblem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A bound was requested outside the regime where it holds.
class InvalidRegime : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace qcs
