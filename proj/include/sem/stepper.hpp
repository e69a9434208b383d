#pragma once

#include <optional>
#include <utility>

#include "sem/core_state.hpp"
#include "sem/errors.hpp"
#include "sem/singularity.hpp"
#include "sem/systems.hpp"

namespace sem {

enum class CrossingMode { Auto, ForceGhost, ForceRegularized };

struct SolverConfig {
  double inner_tol = 1e-13;      // midpoint-equation residual, inf-norm
  int inner_max_iter = 50;
  double outer_tol = 1e-12;      // |H| or |psi*H| residual at the midpoint
  int outer_max_iter = 100;
  double bracket_expansion = 1.6;
  double psi_k = 0.0;            // constant of the psi-constraint
  double h0_offset = 1e-3;       // initial |H(z0)| magnitude for the prho policy
  CrossingMode crossing_mode = CrossingMode::Auto;
  double lambda_seed = 0.1;      // first-step search scale

  // Roots below this magnitude are treated as the spurious lambda = 0
  // solution that appears whenever H(z_k) ~ 0.
  double dead_band() const { return 10.0 * outer_tol; }

  void validate() const;
};

/// Solves zbar = z_k + (lambda/2) J H_z(zbar) + (mu/2) J psi_z(zbar) by
/// Newton iteration with Jacobian I - (lambda/2) J H_zz(zbar); the mu term
/// enters the residual only (fixed-point correction). Throws NoConvergence.
ExtendedState solve_midpoint_state(const SystemDefinition& sys, const ExtendedState& z_k,
                                   double lambda, double mu, const SolverConfig& cfg);

/// H(zbar(lambda, z_k)) with mu = 0.
double residual_H(const SystemDefinition& sys, const ExtendedState& z_k, double lambda,
                  const SolverConfig& cfg);

/// psi(zbar(lambda, z_k)) * H(zbar(lambda, z_k)) with mu = 0.
double residual_product(const SystemDefinition& sys, const ExtendedState& z_k, double lambda,
                        const SolverConfig& cfg);

/// One step of the product equation psi(zbar)H(zbar) = 0 for lambda >= 0,
/// Newton seeded at lambda_guess with a bracketed fallback. If the root
/// converged to the psi factor (|h_mid| > outer_tol) the result signals the
/// crossing machinery rather than a completed DTH step.
StepResult step_normal(const SystemDefinition& sys, const ExtendedState& z_k, double lambda_guess,
                       const SolverConfig& cfg);

/// True when psi changes sign (or vanishes) between the step's vertices.
bool detect_crossing(const SystemDefinition& sys, const StepResult& step);

/// Solves psi(zbar(lambda, z_k)) = 0. The root may be negative; the forward
/// direction is searched first. Throws NoRoot.
std::pair<double, ExtendedState> find_lambda_psi(const SystemDefinition& sys,
                                                 const ExtendedState& z_k,
                                                 const SolverConfig& cfg);

/// Root of H(zbar(lambda)) = 0 on [0, lambda_psi] by Brent bracketing.
/// Requires H(z_k) * H(zbar(lambda_psi)) <= 0.
StepResult step_bracketed(const SystemDefinition& sys, const ExtendedState& z_k,
                          double lambda_psi, const SolverConfig& cfg);

/// Crossing step of an (unregularized) ghost trajectory: the root of
/// H(zbar(lambda)) = 0 with lambda >= lambda_psi, i.e. midpoint past the
/// singular set. Not time reversible.
StepResult step_ghost(const SystemDefinition& sys, const ExtendedState& z_k,
                      const SolverConfig& cfg);

/// Regularized crossing: solves {H(zbar(lambda, mu)) = 0, psi(zbar(lambda, mu)) = psi_k}
/// for (lambda_k, mu_k), then the follow-up step with lambda >= max(0, lambda_psi).
std::pair<StepResult, StepResult> step_regularized(const SystemDefinition& sys,
                                                   const ExtendedState& z_k,
                                                   const SolverConfig& cfg);

/// Plain H(zbar(lambda)) = 0 for lambda >= 0, no product equation; keeps the
/// trajectory from immediately recrossing psi = 0.
StepResult step_post_cross(const SystemDefinition& sys, const ExtendedState& z_k,
                           const SolverConfig& cfg);

/// prho policy for callers that supply only physical coordinates: places
/// H(z0) at h0_offset with the sign of psi(z0), the side on which the first
/// step equation H(zbar(lambda)) = H(z0) - (psi/8) lambda^2 + ... has a root.
ExtendedState with_default_prho(const SystemDefinition& sys, const Vec& q, const Vec& p, double t,
                                const SolverConfig& cfg);

/// Runs the full trajectory state machine: normal steps, crossing detection,
/// bracketed refinement, ghost or regularized traversal of psi = 0, and the
/// post-crossing step. On a solver error the partial trajectory is returned
/// with failure context attached. If H(z0) = 0 exactly, prho is nudged per
/// the h0_offset policy first.
Trajectory integrate(const SystemDefinition& sys, const ExtendedState& z0, int num_steps,
                     const SolverConfig& cfg);

/// Same machine run backward in time: every lambda search is restricted to
/// the opposite sign and the inequality side of the psi constraint flips.
Trajectory integrate_reverse(const SystemDefinition& sys, const ExtendedState& zN, int num_steps,
                             const SolverConfig& cfg);

}  // namespace sem
