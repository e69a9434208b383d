#pragma once

#include <functional>
#include <span>
#include <string>

#include "sem/core_state.hpp"
#include "sem/linalg.hpp"

namespace sem {

using ConstSpan = std::span<const double>;

/// A Hamiltonian system H(t, q, p) with derivatives. The physical gradient
/// and Hessian use the coordinate ordering (q_1..q_n, t, p_1..p_n), i.e. the
/// extended ordering with the prho slot dropped. third_contraction acts on
/// full extended coordinates and may be left empty; consumers that need
/// third derivatives then fall back to finite differences of psi.
struct SystemDefinition {
  int n = 0;
  std::string name;

  std::function<double(double t, ConstSpan q, ConstSpan p)> eval_H;
  std::function<void(double t, ConstSpan q, ConstSpan p, std::span<double> out)> grad_H;
  std::function<void(double t, ConstSpan q, ConstSpan p, Mat& out)> hess_H;
  // w_i = sum_{j,k} H_{z_i z_j z_k} v_j v_k over extended coordinates.
  std::function<void(ConstSpan z, ConstSpan v, std::span<double> out)> third_contraction;

  bool has_third() const { return static_cast<bool>(third_contraction); }
  int dim() const { return 2 * (n + 1); }
};

// Views into a flat extended vector z = (q, t, p, prho).
inline ConstSpan q_of(const SystemDefinition& sys, const Vec& z) {
  return ConstSpan(z.data(), static_cast<size_t>(sys.n));
}
inline ConstSpan p_of(const SystemDefinition& sys, const Vec& z) {
  return ConstSpan(z.data() + sys.n + 1, static_cast<size_t>(sys.n));
}
inline double t_of(const SystemDefinition& sys, const Vec& z) { return z[sys.n]; }
inline double prho_of(const SystemDefinition& sys, const Vec& z) { return z[2 * sys.n + 1]; }

void check_dim(const SystemDefinition& sys, const Vec& z, const char* where);

/// The extended-phase-space Hamiltonian: prho + H(t, q, p).
double extended_H(const SystemDefinition& sys, const Vec& z);
double extended_H(const SystemDefinition& sys, const ExtendedState& z);

/// Gradient of the extended Hamiltonian, (H_q, H_t, H_p, 1). The prho slot
/// is exactly 1 by structure.
void extended_grad(const SystemDefinition& sys, const Vec& z, Vec& out);
Vec extended_grad(const SystemDefinition& sys, const Vec& z);
Vec extended_grad(const SystemDefinition& sys, const ExtendedState& z);

/// Hessian of the extended Hamiltonian; the prho row and column are zero.
void extended_hess(const SystemDefinition& sys, const Vec& z, Mat& out);
Mat extended_hess(const SystemDefinition& sys, const Vec& z);
Mat extended_hess(const SystemDefinition& sys, const ExtendedState& z);

/// H = p^2/2 - cos(q). Analytic derivatives through third order.
SystemDefinition pendulum();

/// H = (p^2 + q^2)/2. Quadratic, so third derivatives vanish identically;
/// closed forms make it the oracle system for the stepper tests.
SystemDefinition harmonic_oscillator();

/// Planar Kepler one-body problem, H = |p|^2/2 - 1/|x|. States with
/// |x| < 1e-12 are rejected as out of domain.
SystemDefinition kepler_2d();

}  // namespace sem
