#pragma once

#include <stdexcept>
#include <string>

namespace sem {

struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

/// An inner or outer iteration ran out of its iteration budget.
struct NoConvergence : SolverError {
  NoConvergence(const std::string& what, int iterations_, double residual_)
      : SolverError(what + ": no convergence after " + std::to_string(iterations_) +
                    " iterations, residual " + std::to_string(residual_)),
        iterations(iterations_),
        residual(residual_) {}
  int iterations;
  double residual;
};

/// No sign change found within the search horizon.
struct NoRoot : SolverError {
  explicit NoRoot(const std::string& msg) : SolverError(msg) {}
};

/// A verified bracket degenerated during refinement.
struct BracketLost : SolverError {
  explicit BracketLost(const std::string& msg) : SolverError(msg) {}
};

/// The 2x2 Jacobian of the regularized solve is singular; the linear
/// independence hypothesis of the regularized equations failed.
struct DegenerateJacobian : SolverError {
  explicit DegenerateJacobian(const std::string& msg) : SolverError(msg) {}
};

}  // namespace sem
