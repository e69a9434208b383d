#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sem/linalg.hpp"

namespace sem {

/// A point z = (q_1..q_n, t, p_1..p_n, prho) of extended phase space.
/// The last position coordinate is time t; the last momentum coordinate is
/// prho, the momentum conjugate to time. All modules rely on this layout.
struct ExtendedState {
  Vec qext;  // q_1..q_n, t
  Vec pext;  // p_1..p_n, prho

  ExtendedState() = default;
  ExtendedState(Vec q, Vec p) : qext(std::move(q)), pext(std::move(p)) { validate(); }

  static ExtendedState from_flat(const Vec& z) {
    if (z.size() % 2 != 0 || z.size() < 4) {
      throw std::invalid_argument("ExtendedState: flat vector must have even length >= 4");
    }
    const size_t m = z.size() / 2;
    return ExtendedState(Vec(z.begin(), z.begin() + m), Vec(z.begin() + m, z.end()));
  }

  static ExtendedState from_physical(const Vec& q, const Vec& p, double t, double prho) {
    Vec qe = q;
    qe.push_back(t);
    Vec pe = p;
    pe.push_back(prho);
    return ExtendedState(std::move(qe), std::move(pe));
  }

  int n() const { return static_cast<int>(qext.size()) - 1; }
  int dim() const { return 2 * static_cast<int>(qext.size()); }
  double t() const { return qext.back(); }
  double prho() const { return pext.back(); }
  double q(int i) const { return qext[i]; }
  double p(int i) const { return pext[i]; }

  Vec flat() const {
    Vec z;
    z.reserve(qext.size() + pext.size());
    z.insert(z.end(), qext.begin(), qext.end());
    z.insert(z.end(), pext.begin(), pext.end());
    return z;
  }

  void validate() const {
    if (qext.size() != pext.size() || qext.size() < 2) {
      throw std::invalid_argument("ExtendedState: qext/pext must both have length n+1, n >= 1");
    }
    if (!all_finite(qext) || !all_finite(pext)) {
      throw std::invalid_argument("ExtendedState: entries must be finite");
    }
  }
};

/// The symplectic structure map z -> Jz with J = [[0, I], [-I, 0]].
/// Never materialized as a matrix: (a, b) -> (b, -a) on half-vectors.
inline void apply_J(const Vec& v, Vec& out) {
  if (v.size() % 2 != 0) throw std::invalid_argument("apply_J: vector length must be even");
  const size_t m = v.size() / 2;
  out.resize(v.size());
  for (size_t i = 0; i < m; ++i) {
    out[i] = v[m + i];
    out[m + i] = -v[i];
  }
}

inline Vec apply_J(const Vec& v) {
  Vec out;
  apply_J(v, out);
  return out;
}

/// Left-multiplies a square matrix by J, i.e. rows (a, b) -> (b, -a).
inline void apply_J_rows(Mat& m) {
  const int half = m.rows() / 2;
  if (2 * half != m.rows()) throw std::invalid_argument("apply_J_rows: odd row count");
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = 0; i < half; ++i) {
      const double top = m(i, j);
      m(i, j) = m(half + i, j);
      m(half + i, j) = -top;
    }
  }
}

inline ExtendedState midpoint(const ExtendedState& a, const ExtendedState& b) {
  if (a.qext.size() != b.qext.size() || a.pext.size() != b.pext.size()) {
    throw std::invalid_argument("midpoint: dimension mismatch");
  }
  ExtendedState m = a;
  for (size_t i = 0; i < m.qext.size(); ++i) m.qext[i] = 0.5 * (a.qext[i] + b.qext[i]);
  for (size_t i = 0; i < m.pext.size(); ++i) m.pext[i] = 0.5 * (a.pext[i] + b.pext[i]);
  return m;
}

enum class Branch { Normal, Bracketed, Ghost, Regularized, PostCross };

inline const char* branch_name(Branch b) {
  switch (b) {
    case Branch::Normal: return "Normal";
    case Branch::Bracketed: return "Bracketed";
    case Branch::Ghost: return "Ghost";
    case Branch::Regularized: return "Regularized";
    case Branch::PostCross: return "PostCross";
  }
  return "?";
}

/// One accepted segment of a trajectory. lambda is the multiplier of the
/// Hamiltonian constraint (equals the time step when mu = 0); mu is the KKT
/// multiplier of the psi-constraint, nonzero only on Regularized steps.
struct StepResult {
  ExtendedState z_start;
  ExtendedState z_end;
  ExtendedState z_mid;
  double lambda = 0.0;
  double mu = 0.0;
  Branch branch = Branch::Normal;
  double psi_mid = 0.0;
  double h_mid = 0.0;
};

enum class EventKind { CrossingDetected, BracketFound, GhostBranch, RegularizedBranch, NegativeLambda };

inline const char* event_name(EventKind k) {
  switch (k) {
    case EventKind::CrossingDetected: return "CrossingDetected";
    case EventKind::BracketFound: return "BracketFound";
    case EventKind::GhostBranch: return "GhostBranch";
    case EventKind::RegularizedBranch: return "RegularizedBranch";
    case EventKind::NegativeLambda: return "NegativeLambda";
  }
  return "?";
}

struct Event {
  int step_index = 0;
  EventKind kind = EventKind::CrossingDetected;
};

struct IntegrationFailure {
  std::string message;
  int step_index = 0;  // number of steps accepted before the failure
};

/// Ordered steps plus the event log. steps[k].z_end and steps[k+1].z_start
/// share the vertex exactly. On solver failure the trajectory holds the
/// steps accepted so far and `failure` carries the context.
struct Trajectory {
  std::vector<StepResult> steps;
  std::vector<Event> events;
  std::optional<IntegrationFailure> failure;

  bool has_event(EventKind k) const {
    for (const Event& e : events) {
      if (e.kind == k) return true;
    }
    return false;
  }
};

}  // namespace sem
