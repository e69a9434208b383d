#include "sem/singularity.hpp"

#include <cmath>
#include <limits>

namespace sem {

double psi_value(const Vec& grad, const Mat& hess) {
  Vec u = apply_J(grad);
  Vec hu = matvec(hess, u);
  return dot(u, hu);
}

double psi(const SystemDefinition& sys, const Vec& z) {
  return psi_value(extended_grad(sys, z), extended_hess(sys, z));
}

double psi(const SystemDefinition& sys, const ExtendedState& z) { return psi(sys, z.flat()); }

PsiEval psi_grad(const SystemDefinition& sys, const Vec& z) {
  PsiEval out;
  const Vec grad = extended_grad(sys, z);
  const Mat hess = extended_hess(sys, z);
  const Vec u = apply_J(grad);
  Vec hu = matvec(hess, u);
  out.value = dot(u, hu);

  if (sys.has_third()) {
    // psi_z = T3(z, u) + 2 H_zz J^T H_zz u with J^T = -J.
    Vec t3(z.size(), 0.0);
    sys.third_contraction(ConstSpan(z.data(), z.size()), ConstSpan(u.data(), u.size()),
                          std::span<double>(t3.data(), t3.size()));
    Vec jt_hu = apply_J(hu);
    for (double& x : jt_hu) x = -x;
    Vec second = matvec(hess, jt_hu);
    out.grad.resize(z.size());
    for (size_t i = 0; i < z.size(); ++i) out.grad[i] = t3[i] + 2.0 * second[i];
    out.grad_is_exact = true;
    return out;
  }

  // Centered differences of psi; cube-root-of-eps step for a first
  // derivative of a computed function.
  const double h = std::max(1.0, norm_inf(z)) * std::cbrt(std::numeric_limits<double>::epsilon());
  out.grad.resize(z.size());
  Vec zp = z;
  for (size_t i = 0; i < z.size(); ++i) {
    const double zi = z[i];
    zp[i] = zi + h;
    const double fp = psi(sys, zp);
    zp[i] = zi - h;
    const double fm = psi(sys, zp);
    zp[i] = zi;
    out.grad[i] = (fp - fm) / (2.0 * h);
  }
  out.grad_is_exact = false;
  return out;
}

PsiEval psi_grad(const SystemDefinition& sys, const ExtendedState& z) {
  return psi_grad(sys, z.flat());
}

double poisson_bracket(const Vec& grad_f, const Vec& grad_g) {
  if (grad_f.size() != grad_g.size()) {
    throw std::invalid_argument("poisson_bracket: gradient length mismatch");
  }
  return dot(grad_f, apply_J(grad_g));
}

}  // namespace sem
