#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sem/core_state.hpp"
#include "sem/stepper.hpp"
#include "sem/systems.hpp"

namespace sem {

/// A scalar observable of the extended state, optionally with its gradient
/// in extended coordinates.
struct Observable {
  std::string name;
  std::function<double(const ExtendedState&)> value;
  std::function<Vec(const ExtendedState&)> gradient;  // optional
};

struct ConservationReport {
  double max_abs_H_mid = 0.0;
  std::vector<std::string> names;
  std::vector<double> max_rel_drift;  // one entry per observable
  struct Row {
    int k = 0;
    double t = 0.0;
    double h_mid = 0.0;            // re-derived H(zbar_k), not StepResult.h_mid
    std::vector<double> values;    // observables at the end vertex
  };
  std::vector<Row> per_step;
};

/// One-step action A = (1/2) dq^T dp over extended coordinates.
double one_step_action(const StepResult& step);

/// Builds M = dz_N/dz_0 by centered differences (each of the 2(n+1)
/// components of z0 perturbed by +-fd_step, full re-integration) and returns
/// ||M^T J M - J||_inf. Throws if any perturbed integration fails.
double symplecticity_check(const SystemDefinition& sys, const ExtendedState& z0, int num_steps,
                           const SolverConfig& cfg, double fd_step);

/// Integrates forward num_steps, then backward the same count, and returns
/// ||recovered z0 - z0||_inf.
double reversibility_check(const SystemDefinition& sys, const ExtendedState& z0, int num_steps,
                           const SolverConfig& cfg);

/// Re-derives H at every midpoint and tabulates relative drift of each
/// observable at the vertices.
ConservationReport conservation_report(const SystemDefinition& sys, const Trajectory& traj,
                                       const std::vector<Observable>& observables);

/// Angle (radians, in [0, pi/2]) between the physical components of dz and
/// of J H_z(zbar): 0 means the segment is tangent to its energy level set.
double tangency_check(const SystemDefinition& sys, const StepResult& step);

/// Which side of the energy manifold the segment is tangent on; the sign of
/// psi at the midpoint. Flips between a ghost crossing and its reversal.
int tangency_side(const SystemDefinition& sys, const StepResult& step);

}  // namespace sem
