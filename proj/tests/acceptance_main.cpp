// Acceptance suite: the integrator's conservation, symplecticness,
// reversibility and structural claims, each checked at its stated tolerance.
// Prints one line per criterion and exits nonzero if any fail.

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "sem/diagnostics.hpp"
#include "sem/singularity.hpp"
#include "sem/stepper.hpp"
#include "test_support.hpp"

using namespace sem;

namespace {

int g_failures = 0;

void report(int id, const std::string& what, bool pass, const std::string& detail) {
  std::printf("[%s] C%-2d %s (%s)\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

double kepler_L(const ExtendedState& z) { return z.q(0) * z.p(1) - z.q(1) * z.p(0); }

// 1. Energy at midpoints: pendulum libration, 1e4 steps, default tolerances.
void criterion_1() {
  const auto pend = pendulum();
  SolverConfig cfg;
  const auto z0 = with_default_prho(pend, {0.0}, {1.0}, 0.0, cfg);
  const Trajectory tr = integrate(pend, z0, 10000, cfg);
  if (tr.failure) {
    report(1, "energy at midpoints", false, "integration failed: " + tr.failure->message);
    return;
  }
  const ConservationReport rep = conservation_report(pend, tr, {});
  report(1, "energy at midpoints, pendulum 1e4 steps", rep.max_abs_H_mid <= 1e-11,
         "max|H(zbar)| = " + fmt(rep.max_abs_H_mid) + " <= 1e-11");
}

// 2. Momentum at vertices: Kepler circular and eccentric orbits.
void criterion_2() {
  const auto kp = kepler_2d();
  SolverConfig cfg;
  bool pass = true;
  std::string detail;
  for (double p1 : {1.0, 1.2}) {
    const auto z0 = with_default_prho(kp, {1.0, 0.0}, {0.0, p1}, 0.0, cfg);
    const Trajectory tr = integrate(kp, z0, 1000, cfg);
    if (tr.failure) {
      pass = false;
      detail += "run p=" + fmt(p1) + " failed; ";
      continue;
    }
    std::vector<Observable> obs{{"L", kepler_L, {}}};
    const ConservationReport rep = conservation_report(kp, tr, obs);
    pass = pass && rep.max_rel_drift[0] <= 1e-10;
    detail += "drift(p0y=" + std::to_string(p1).substr(0, 3) + ") = " +
              fmt(rep.max_rel_drift[0]) + "; ";
  }
  report(2, "kepler angular momentum at vertices, 1e3 steps", pass, detail + "<= 1e-10");
}

// 3. Symplecticness through a regularized crossing by finite differences.
void criterion_3() {
  const auto pend = pendulum();
  SolverConfig cfg;
  const auto z0 = ExtendedState::from_physical({0.0}, {3.0}, 0.0, -3.45);
  const Trajectory tr = integrate(pend, z0, 100, cfg);
  if (tr.failure || !tr.has_event(EventKind::RegularizedBranch)) {
    report(3, "symplecticness", false, "base run lacks a regularized crossing");
    return;
  }
  const double defect = symplecticity_check(pend, z0, 100, cfg, 1e-6);
  report(3, "symplecticness ||M^T J M - J||, N=100 through crossing", defect <= 1e-5,
         "defect = " + fmt(defect) + " <= 1e-5");
}

// 4. Reversibility of a regularized crossing over 200 steps.
void criterion_4() {
  const auto pend = pendulum();
  SolverConfig cfg;
  const auto z0 = with_default_prho(pend, {0.0}, {3.0}, 0.0, cfg);
  const Trajectory fwd = integrate(pend, z0, 200, cfg);
  if (fwd.failure || !fwd.has_event(EventKind::CrossingDetected)) {
    report(4, "reversibility", false, "forward run failed or saw no crossing");
    return;
  }
  const double err = reversibility_check(pend, z0, 200, cfg);
  report(4, "regularized crossing reversibility, 200 steps", err <= 1e-8,
         "recovery error = " + fmt(err) + " <= 1e-8");
}

// 5. Ghost crossings are not reversible and flip their tangency side.
//    Ghost trajectories amplify the vertex energy defect at every crossing
//    and stop admitting steps after a few of them, so the span covers the
//    first crossing of the same configuration rather than 200 steps.
void criterion_5() {
  const auto pend = pendulum();
  SolverConfig cfg;
  cfg.crossing_mode = CrossingMode::ForceGhost;
  const auto z0 = with_default_prho(pend, {0.0}, {3.0}, 0.0, cfg);
  const int n = 20;
  const Trajectory fwd = integrate(pend, z0, n, cfg);
  if (fwd.failure || !fwd.has_event(EventKind::GhostBranch)) {
    report(5, "ghost non-reversibility", false, "forward ghost run failed");
    return;
  }
  const Trajectory back = integrate_reverse(pend, fwd.steps.back().z_end, n, cfg);
  if (back.failure) {
    report(5, "ghost non-reversibility", false, "reverse ghost run failed");
    return;
  }
  double mismatch = 0.0;
  const Vec rec = back.steps.back().z_end.flat();
  const Vec orig = fwd.steps.front().z_start.flat();
  for (size_t i = 0; i < rec.size(); ++i) {
    mismatch = std::max(mismatch, std::abs(rec[i] - orig[i]));
  }
  const StepResult* fg = nullptr;
  const StepResult* bg = nullptr;
  for (const auto& s : fwd.steps) {
    if (s.branch == Branch::Ghost && !fg) fg = &s;
  }
  for (const auto& s : back.steps) {
    if (s.branch == Branch::Ghost && !bg) bg = &s;
  }
  const bool side_flips =
      fg && bg && tangency_side(pend, *fg) * tangency_side(pend, *bg) == -1;
  report(5, "ghost non-reversibility and tangency-side flip", mismatch > 1e-3 && side_flips,
         "mismatch = " + fmt(mismatch) + " > 1e-3, side " +
             std::to_string(fg ? tangency_side(pend, *fg) : 0) + " -> " +
             std::to_string(bg ? tangency_side(pend, *bg) : 0));
}

// 6. KKT structure: complementary slackness and the step-equation residual.
void criterion_6() {
  const auto pend = pendulum();
  SolverConfig cfg;
  const auto z0 = with_default_prho(pend, {0.0}, {3.0}, 0.0, cfg);
  const Trajectory tr = integrate(pend, z0, 200, cfg);
  if (tr.failure) {
    report(6, "KKT structure", false, "run failed: " + tr.failure->message);
    return;
  }
  bool slackness = true;
  double max_res = 0.0;
  int active = 0;
  for (const auto& s : tr.steps) {
    if (s.mu != 0.0) {
      ++active;
      if (std::abs(s.psi_mid - cfg.psi_k) > cfg.outer_tol) slackness = false;
    }
    const Vec jg = apply_J(extended_grad(pend, s.z_mid));
    Vec jp;
    if (s.mu != 0.0) jp = apply_J(psi_grad(pend, s.z_mid.flat()).grad);
    const Vec a = s.z_start.flat(), b = s.z_end.flat();
    for (size_t i = 0; i < a.size(); ++i) {
      double r = b[i] - a[i] - s.lambda * jg[i];
      if (s.mu != 0.0) r -= s.mu * jp[i];
      max_res = std::max(max_res, std::abs(r));
    }
  }
  const bool pass = slackness && active >= 1 && max_res <= 10.0 * cfg.inner_tol;
  report(6, "KKT complementary slackness + step-equation residual", pass,
         std::to_string(active) + " active steps, max residual = " + fmt(max_res) +
             " <= " + fmt(10.0 * cfg.inner_tol));
}

// 7. Closed-form oracle: harmonic oscillator lambda = 2/7, constant, no events.
void criterion_7() {
  const auto hs = harmonic_oscillator();
  SolverConfig cfg;
  const auto z0 = ExtendedState::from_flat({1.0, 0.0, 0.0, -0.49});
  const Trajectory tr = integrate(hs, z0, 1000, cfg);
  if (tr.failure) {
    report(7, "harmonic closed form", false, "run failed");
    return;
  }
  const double lambda_star = 2.0 / 7.0;
  double max_dev = 0.0;
  for (const auto& s : tr.steps) max_dev = std::max(max_dev, std::abs(s.lambda - lambda_star));
  const bool pass = std::abs(tr.steps[0].lambda - lambda_star) <= 1e-12 && max_dev <= 1e-12 &&
                    tr.events.empty();
  report(7, "harmonic oscillator lambda = 2/7, constant over 1000 steps", pass,
         "max|lambda - 2/7| = " + fmt(max_dev) + ", events = " +
             std::to_string(tr.events.size()));
}

// 8. [L, psi] = 0 for Kepler angular momentum, analytic psi gradient.
void criterion_8() {
  const auto kp = kepler_2d();
  auto rng = semtest::seeded_rng(2026);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Vec z = semtest::random_state(6, rng, -2.0, 2.0);
    double r = std::hypot(z[0], z[1]);
    while (r < 0.5 || r > 2.0) {
      z[0] = semtest::random_state(1, rng, -2.0, 2.0)[0];
      z[1] = semtest::random_state(1, rng, -2.0, 2.0)[0];
      r = std::hypot(z[0], z[1]);
    }
    const PsiEval pe = psi_grad(kp, z);
    const Vec lgrad{z[4], -z[3], 0.0, -z[1], z[0], 0.0};
    worst = std::max(worst, std::abs(poisson_bracket(lgrad, pe.grad)));
  }
  report(8, "[L, psi] = 0 at 100 random kepler states", worst <= 1e-9,
         "max |[L,psi]| = " + fmt(worst) + " <= 1e-9");
}

// 9. psi invariance under exact linear symplectic coordinate changes.
void criterion_9() {
  const auto pend = pendulum();
  auto rng = semtest::seeded_rng(2027);
  double worst = 0.0;
  bool maps_ok = true;
  for (int m = 0; m < 20; ++m) {
    const Mat t = semtest::random_symplectic(4, rng);
    if (semtest::symplectic_defect(t) > 1e-12) maps_ok = false;
    const Mat tt = semtest::transpose(t);
    for (int s = 0; s < 20; ++s) {
      const Vec big_z = semtest::random_state(4, rng, -1.5, 1.5);
      const Vec z = matvec(t, big_z);
      const Vec kz = matvec(tt, extended_grad(pend, z));
      const Mat kzz = semtest::matmul(tt, semtest::matmul(extended_hess(pend, z), t));
      const double psi_new = psi_value(kz, kzz);
      const double psi_old = psi(pend, z);
      worst = std::max(worst,
                       std::abs(psi_new - psi_old) / std::max(1.0, std::abs(psi_old)));
    }
  }
  report(9, "psi coordinate invariance, 20 maps x 20 states", maps_ok && worst <= 1e-9,
         "max rel deviation = " + fmt(worst) + " <= 1e-9");
}

// 10. Second-order accuracy against an RK4 reference over one period.
void criterion_10() {
  const auto pend = pendulum();
  const double q_max = 1.0;
  const double period = semtest::pendulum_period(q_max);
  auto max_err = [&](double offset) -> double {
    SolverConfig cfg;
    cfg.h0_offset = offset;
    const auto z0 = with_default_prho(pend, {1.0}, {0.0}, 0.0, cfg);
    const int n_est = static_cast<int>(period / (0.8 * std::sqrt(8.0 * offset / 0.7))) + 50;
    const Trajectory tr = integrate(pend, z0, n_est, cfg);
    if (tr.failure) return -1.0;
    double q = 1.0, p = 0.0, tref = 0.0, err = 0.0;
    for (const auto& s : tr.steps) {
      const double tk = s.z_end.t();
      if (tk > period) break;
      const double dt = tk - tref;
      const int m = std::max(1, static_cast<int>(std::ceil(std::abs(dt) / 1e-4)));
      semtest::rk4_pendulum(q, p, dt, m);
      tref = tk;
      err = std::max({err, std::abs(q - s.z_end.q(0)), std::abs(p - s.z_end.p(0))});
    }
    return err;
  };
  const double coarse = max_err(1e-3);    // mean lambda ~ 0.103
  const double fine = max_err(2.5e-4);    // mean lambda halves
  if (coarse <= 0.0 || fine <= 0.0) {
    report(10, "second-order accuracy", false, "reference comparison failed");
    return;
  }
  const double ratio = coarse / fine;
  report(10, "second-order accuracy: halving the mean step", ratio >= 3.2 && ratio <= 4.8,
         "error ratio = " + fmt(ratio) + " in [3.2, 4.8]");
}

// 11. Event structure of the figure-2 configurations.
void criterion_11() {
  const auto pend = pendulum();
  SolverConfig cfg;
  const auto z_rot = with_default_prho(pend, {0.0}, {3.0}, 0.0, cfg);
  const Trajectory rot = integrate(pend, z_rot, 2000, cfg);
  const auto z_lib = with_default_prho(pend, {0.0}, {1.0}, 0.0, cfg);
  const Trajectory lib = integrate(pend, z_lib, 2000, cfg);
  const bool pass = !rot.failure && rot.has_event(EventKind::CrossingDetected) &&
                    rot.has_event(EventKind::RegularizedBranch) && !lib.failure &&
                    lib.events.empty();
  report(11, "event log: rotation crosses, libration does not", pass,
         "rotation events = " + std::to_string(rot.events.size()) +
             ", libration events = " + std::to_string(lib.events.size()));
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  criterion_11();
  if (g_failures > 0) {
    std::printf("%d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}
