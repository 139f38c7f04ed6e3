#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace chns {

// Linear solve did not reach the requested residual.
class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what), residual(residual) {}
  double residual;
};

// Newton iteration exhausted max_iter; carries the residual history.
class NewtonError : public std::runtime_error {
public:
  NewtonError(const std::string& what, std::vector<double> history)
      : std::runtime_error(what), residual_history(std::move(history)) {}
  std::vector<double> residual_history;
};

// A time step failed even after the adaptive remedy.
class StepError : public std::runtime_error {
public:
  StepError(const std::string& what, int step)
      : std::runtime_error(what), step(step) {}
  int step;
};

// An admissibility constraint (e.g. |u_I| <= 1) is violated.
class ConstraintError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid scenario / config input; collects all violations.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::vector<std::string>& violations)
      : std::runtime_error(join(violations)), violations(violations) {}
  std::vector<std::string> violations;

private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "configuration error:";
    for (const auto& e : v) s += "\n  - " + e;
    return s;
  }
};

} // namespace chns
