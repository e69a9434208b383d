#pragma once

#include "sem/core_state.hpp"
#include "sem/linalg.hpp"
#include "sem/systems.hpp"

namespace sem {

/// psi and its gradient at a state. grad_is_exact records whether the
/// analytic third-derivative path or the finite-difference fallback ran.
struct PsiEval {
  double value = 0.0;
  Vec grad;
  bool grad_is_exact = false;
};

/// General form: psi = (J grad)^T hess (J grad) for any extended Hamiltonian
/// data. The coordinate-invariance tests evaluate transformed Hamiltonians
/// through this entry point.
double psi_value(const Vec& grad, const Mat& hess);

/// The singularity function psi(z) = (J H_z)^T H_zz (J H_z). psi != 0 is the
/// sufficient condition for local existence/uniqueness of DTH steps.
double psi(const SystemDefinition& sys, const Vec& z);
double psi(const SystemDefinition& sys, const ExtendedState& z);

/// Gradient of psi. With analytic third derivatives,
///   psi_z = T3(z, u) + 2 H_zz J^T H_zz u,  u = J H_z,
/// which is the matrix form of differentiating psi once. Without them,
/// centered differences of psi with step max(1, |z|_inf) * eps^(1/3).
PsiEval psi_grad(const SystemDefinition& sys, const Vec& z);
PsiEval psi_grad(const SystemDefinition& sys, const ExtendedState& z);

/// [f, g] = f_z^T J g_z evaluated from the two gradients.
double poisson_bracket(const Vec& grad_f, const Vec& grad_g);

}  // namespace sem
