#include "sem/stepper.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace sem {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double sign_of(double x) { return x < 0.0 ? -1.0 : 1.0; }

/// A midpoint evaluation at given multipliers: the converged zbar plus the
/// two residual functions of interest.
struct MidEval {
  Vec zbar;
  double h = 0.0;    // H(zbar)
  double psi = 0.0;  // psi(zbar)
};

/// Everything the step solvers share: the system, the configuration and the
/// time direction (+1 forward, -1 reverse).
class Engine {
 public:
  Engine(const SystemDefinition& sys, const SolverConfig& cfg, int dir)
      : sys_(sys), cfg_(cfg), dir_(dir) {}

  const SolverConfig& cfg() const { return cfg_; }

  // ---- inner iteration -----------------------------------------------

  /// Residual of the midpoint equation,
  /// F(zbar) = zbar - z_k - (lambda/2) J H_z(zbar) - (mu/2) J psi_z(zbar).
  /// Returns the inf-norm and fills `out`.
  double residual(const Vec& z_k, const Vec& zbar, double lambda, double mu, Vec& out) const {
    Vec jg = apply_J(extended_grad(sys_, zbar));
    out.resize(z_k.size());
    for (size_t i = 0; i < z_k.size(); ++i) {
      out[i] = zbar[i] - z_k[i] - 0.5 * lambda * jg[i];
    }
    if (mu != 0.0) {
      const PsiEval pe = psi_grad(sys_, zbar);
      Vec jp = apply_J(pe.grad);
      for (size_t i = 0; i < z_k.size(); ++i) out[i] -= 0.5 * mu * jp[i];
    }
    return norm_inf(out);
  }

  Vec solve_mid(const Vec& z_k, double lambda, double mu) const {
    const int d = static_cast<int>(z_k.size());
    Vec zbar = z_k;
    Vec resid(d);
    double r = residual(z_k, zbar, lambda, mu, resid);
    Vec best = zbar;
    double best_r = r;
    // The t component grows along a trajectory and its residual row cannot
    // be driven below subtraction roundoff, so the achievable accuracy is
    // relative to the state's magnitude.
    const double floor = 4.0 * kEps * std::max(1.0, norm_inf(z_k));
    const double tol = std::max(cfg_.inner_tol, floor);

    int iter = 0;
    for (; iter < cfg_.inner_max_iter && best_r > floor; ++iter) {
      Mat a = extended_hess(sys_, zbar);
      apply_J_rows(a);  // a <- J * H_zz
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) a(i, j) *= -0.5 * lambda;
        a(i, i) += 1.0;
      }
      Vec rhs(d);
      for (int i = 0; i < d; ++i) rhs[i] = -resid[i];
      Vec delta;
      if (!lu_solve(a, rhs, delta)) {
        throw NoConvergence("inner midpoint solve: singular Newton matrix", iter, best_r);
      }
      // Backtrack if the full step makes the residual worse.
      double scale = 1.0;
      Vec trial(d), trial_res(d);
      double r_new = 0.0;
      bool improved = false;
      for (int halving = 0; halving < 7; ++halving) {
        for (int i = 0; i < d; ++i) trial[i] = zbar[i] + scale * delta[i];
        r_new = residual(z_k, trial, lambda, mu, trial_res);
        if (std::isfinite(r_new) && r_new < r) {
          improved = true;
          break;
        }
        scale *= 0.5;
      }
      if (!improved) break;
      zbar.swap(trial);
      resid.swap(trial_res);
      r = r_new;
      if (r < best_r) {
        best = zbar;
        best_r = r;
      }
    }
    if (best_r <= tol) return best;
    throw NoConvergence("inner midpoint solve", iter, best_r);
  }

  MidEval eval_mid(const Vec& z_k, double lambda, double mu) const {
    MidEval e;
    e.zbar = solve_mid(z_k, lambda, mu);
    e.h = extended_H(sys_, e.zbar);
    e.psi = psi(sys_, e.zbar);
    return e;
  }

  // ---- scalar residuals in lambda (mu = 0) ----------------------------

  enum class Fn { H, Psi, Product };

  static double pick(const MidEval& e, Fn fn) {
    switch (fn) {
      case Fn::H: return e.h;
      case Fn::Psi: return e.psi;
      case Fn::Product: return e.psi * e.h;
    }
    return 0.0;
  }

  bool stop_ok(const MidEval& e, Fn fn) const {
    switch (fn) {
      case Fn::H: return std::abs(e.h) <= cfg_.outer_tol;
      case Fn::Psi: return std::abs(e.psi) <= cfg_.outer_tol;
      case Fn::Product:
        return std::abs(e.h) <= cfg_.outer_tol || std::abs(e.psi) <= cfg_.outer_tol;
    }
    return false;
  }

  struct RootOut {
    double lambda = 0.0;
    MidEval eval;
  };

  double horizon() const { return cfg_.lambda_seed * std::pow(cfg_.bracket_expansion, 64); }

  /// Newton on f(lambda) with centered finite-difference derivative
  /// (step 1e-7 * max(1, |lambda|)). Keeps the best iterate and polishes a
  /// few iterations past the stopping criterion. The result is certified by
  /// a local sign change, which rejects asymptotic f -> 0 tails that are
  /// not roots. Empty on failure.
  std::optional<RootOut> newton_lambda(const Vec& z_k, Fn fn, double x0) const {
    double x = x0;
    std::optional<RootOut> best;
    bool converged = false;
    int polish = 0;
    for (int it = 0; it < cfg_.outer_max_iter; ++it) {
      MidEval e;
      try {
        e = eval_mid(z_k, x, 0.0);
      } catch (const SolverError&) {
        break;
      }
      const double f = pick(e, fn);
      if (!best || std::abs(f) < std::abs(pick(best->eval, fn))) {
        best = RootOut{x, std::move(e)};
      }
      if (stop_ok(best->eval, fn)) converged = true;
      if (converged && ++polish > 4) break;

      const double h = 1e-7 * std::max(1.0, std::abs(x));
      double fp, fm;
      try {
        fp = pick(eval_mid(z_k, x + h, 0.0), fn);
        fm = pick(eval_mid(z_k, x - h, 0.0), fn);
      } catch (const SolverError&) {
        break;
      }
      const double d = (fp - fm) / (2.0 * h);
      if (!std::isfinite(d) || d == 0.0) break;
      const double dx = -f / d;
      if (!std::isfinite(dx) || std::abs(dx) > 1e3 * (1.0 + std::abs(x))) break;
      x += dx;
      if (std::abs(x) > horizon()) return std::nullopt;
      if (std::abs(dx) <= 4.0 * kEps * std::max(std::abs(x), cfg_.dead_band())) {
        if (!converged) {
          try {
            MidEval e2 = eval_mid(z_k, x, 0.0);
            if (!best || std::abs(pick(e2, fn)) < std::abs(pick(best->eval, fn))) {
              best = RootOut{x, std::move(e2)};
            }
            if (stop_ok(best->eval, fn)) converged = true;
          } catch (const SolverError&) {
          }
        }
        break;
      }
    }
    if (!converged || !best) return std::nullopt;
    if (!sign_change_near(z_k, fn, *best)) return std::nullopt;
    return best;
  }

  /// True when f genuinely changes sign across the root (an exact zero also
  /// counts). A vanishing-at-infinity tail fails this test.
  bool sign_change_near(const Vec& z_k, Fn fn, const RootOut& root) const {
    const double f0 = pick(root.eval, fn);
    if (f0 == 0.0) return true;
    const double d = std::max(1e-7 * std::abs(root.lambda), cfg_.dead_band());
    try {
      const double fp = pick(eval_mid(z_k, root.lambda + d, 0.0), fn);
      const double fm = pick(eval_mid(z_k, root.lambda - d, 0.0), fn);
      return fp == 0.0 || fm == 0.0 || (fp < 0.0) != (fm < 0.0);
    } catch (const SolverError&) {
      return false;
    }
  }

  /// Ascending ladder of search offsets: `start`, then
  /// lambda_seed * expansion^j up to 64 expansions.
  std::vector<double> ladder(double start) const {
    std::vector<double> pts;
    pts.push_back(start);
    const double r = cfg_.bracket_expansion;
    double x = cfg_.lambda_seed * std::pow(r, -48);
    for (int j = -48; j <= 64; ++j, x *= r) {
      if (x > start) pts.push_back(x);
    }
    return pts;
  }

  struct ScanBracket {
    double a = 0.0, b = 0.0;
    MidEval ea, eb;
  };

  /// Scans f(base + dir*s) over the ladder for the first sign change.
  /// Inner-solver failures end the scan (the solvable horizon).
  std::optional<ScanBracket> scan(const Vec& z_k, Fn fn, double base, double start_s) const {
    const std::vector<double> pts = ladder(start_s);
    std::optional<std::pair<double, MidEval>> prev;
    for (double s : pts) {
      const double lam = base + dir_ * s;
      MidEval e;
      try {
        e = eval_mid(z_k, lam, 0.0);
      } catch (const SolverError&) {
        break;
      }
      const double f = pick(e, fn);
      if (prev) {
        const double fp = pick(prev->second, fn);
        if (fp == 0.0) return ScanBracket{prev->first, prev->first, prev->second, prev->second};
        if (sign_of(fp) != sign_of(f) || f == 0.0) {
          return ScanBracket{prev->first, lam, std::move(prev->second), std::move(e)};
        }
      }
      prev = {lam, std::move(e)};
    }
    return std::nullopt;
  }

  /// Brent root refinement on a verified bracket; returns the evaluation
  /// with the smallest |f| seen.
  RootOut brent(const Vec& z_k, Fn fn, double a, double b, MidEval ea, MidEval eb) const {
    double fa = pick(ea, fn);
    double fb = pick(eb, fn);
    RootOut best = std::abs(fa) <= std::abs(fb) ? RootOut{a, ea} : RootOut{b, eb};
    if (fa == 0.0) return RootOut{a, std::move(ea)};
    if (fb == 0.0) return RootOut{b, std::move(eb)};
    if (fa * fb > 0.0) throw BracketLost("brent: endpoints have the same sign");

    double c = a, fc = fa, d = b - a, e = b - a;
    for (int it = 0; it < cfg_.outer_max_iter; ++it) {
      if ((fb > 0.0 && fc > 0.0) || (fb < 0.0 && fc < 0.0)) {
        c = a;
        fc = fa;
        e = d = b - a;
      }
      if (std::abs(fc) < std::abs(fb)) {
        a = b; b = c; c = a;
        fa = fb; fb = fc; fc = fa;
      }
      const double tol1 = 2.0 * kEps * std::abs(b) + 0.5 * 4.0 * kEps * cfg_.dead_band();
      const double xm = 0.5 * (c - b);
      if (std::abs(xm) <= tol1 || fb == 0.0) break;
      if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
        double p, q, r;
        const double s = fb / fa;
        if (a == c) {
          p = 2.0 * xm * s;
          q = 1.0 - s;
        } else {
          q = fa / fc;
          r = fb / fc;
          p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
          q = (q - 1.0) * (r - 1.0) * (s - 1.0);
        }
        if (p > 0.0) q = -q;
        p = std::abs(p);
        const double min1 = 3.0 * xm * q - std::abs(tol1 * q);
        const double min2 = std::abs(e * q);
        if (2.0 * p < std::min(min1, min2)) {
          e = d;
          d = p / q;
        } else {
          d = xm;
          e = d;
        }
      } else {
        d = xm;
        e = d;
      }
      a = b;
      fa = fb;
      b += std::abs(d) > tol1 ? d : (xm > 0.0 ? tol1 : -tol1);
      MidEval emid;
      try {
        emid = eval_mid(z_k, b, 0.0);
      } catch (const SolverError&) {
        break;
      }
      fb = pick(emid, fn);
      if (std::abs(fb) < std::abs(pick(best.eval, fn))) best = RootOut{b, std::move(emid)};
    }
    return best;
  }

  StepResult make_step(const Vec& z_k, double lambda, double mu, const MidEval& e,
                       Branch branch) const {
    StepResult s;
    Vec z_end(z_k.size());
    for (size_t i = 0; i < z_k.size(); ++i) z_end[i] = 2.0 * e.zbar[i] - z_k[i];
    s.z_start = ExtendedState::from_flat(z_k);
    s.z_end = ExtendedState::from_flat(z_end);
    s.z_mid = ExtendedState::from_flat(e.zbar);
    s.lambda = lambda;
    s.mu = mu;
    s.branch = branch;
    s.psi_mid = e.psi;
    s.h_mid = e.h;
    return s;
  }

  // ---- step solvers ----------------------------------------------------

  StepResult normal_step(const Vec& z_k, double guess) const {
    std::optional<RootOut> newton = newton_lambda(z_k, Fn::Product, guess);
    if (newton && dir_ * newton->lambda < cfg_.dead_band()) newton.reset();
    RootOut root;
    if (newton) {
      root = std::move(*newton);
    } else {
      auto br = scan(z_k, Fn::Product, 0.0, cfg_.dead_band());
      if (!br) throw NoRoot("product equation: no root within the search horizon");
      root = brent(z_k, Fn::Product, br->a, br->b, br->ea, br->eb);
    }
    // Polish on whichever factor converged; the psi factor marks a root on
    // the singular set and the caller routes it to the crossing machinery.
    const Fn factor = std::abs(root.eval.h) <= cfg_.outer_tol ? Fn::H : Fn::Psi;
    if (auto polished = newton_lambda(z_k, factor, root.lambda)) {
      if (dir_ * polished->lambda >= cfg_.dead_band()) root = std::move(*polished);
    }
    return make_step(z_k, root.lambda, 0.0, root.eval, Branch::Normal);
  }

  std::pair<double, MidEval> lambda_psi(const Vec& z_k, double hint, bool has_hint) const {
    const double psi_k0 = psi(sys_, z_k);
    if (std::abs(psi_k0) <= cfg_.outer_tol) {
      MidEval e;
      e.zbar = z_k;
      e.h = extended_H(sys_, z_k);
      e.psi = psi_k0;
      return {0.0, std::move(e)};
    }
    if (has_hint) {
      if (auto r = newton_lambda(z_k, Fn::Psi, hint)) return {r->lambda, std::move(r->eval)};
    }
    // The singular set nearest this vertex may sit at negative lambda
    // (figure-6 crossing families contain such members), so scan both
    // directions and keep the closer root.
    auto br = scan(z_k, Fn::Psi, 0.0, 0.0);
    {
      Engine back(sys_, cfg_, -dir_);
      auto rev = back.scan(z_k, Fn::Psi, 0.0, 0.0);
      if (rev && (!br || std::abs(rev->a) + std::abs(rev->b) <
                             std::abs(br->a) + std::abs(br->b))) {
        br = std::move(rev);
      }
    }
    if (!br) throw NoRoot("psi(zbar(lambda)) has no sign change in the search interval");
    RootOut r = brent(z_k, Fn::Psi, br->a, br->b, br->ea, br->eb);
    if (auto polished = newton_lambda(z_k, Fn::Psi, r.lambda)) r = *polished;
    return {r.lambda, std::move(r.eval)};
  }

  StepResult bracketed_step(const Vec& z_k, double lam_psi) const {
    MidEval e0;
    e0.zbar = z_k;
    e0.h = extended_H(sys_, z_k);
    e0.psi = psi(sys_, z_k);
    if (e0.h == 0.0) {
      // Degenerate zero-length step: the vertex already sits on H = 0.
      return make_step(z_k, 0.0, 0.0, e0, Branch::Bracketed);
    }
    auto run = [&](const SolverConfig& cfg) -> std::optional<RootOut> {
      Engine eng(sys_, cfg, dir_);
      MidEval epsi = eng.eval_mid(z_k, lam_psi, 0.0);
      if (e0.h * epsi.h > 0.0) return std::nullopt;
      RootOut r = eng.brent(z_k, Fn::H, 0.0, lam_psi, e0, epsi);
      if (std::abs(r.eval.h) > cfg.outer_tol) return std::nullopt;
      return r;
    };
    std::optional<RootOut> r = run(cfg_);
    if (!r) {
      SolverConfig tight = cfg_;
      tight.inner_tol /= 100.0;
      r = run(tight);
    }
    if (!r) throw BracketLost("bracketed H solve lost its sign change");
    return make_step(z_k, r->lambda, 0.0, r->eval, Branch::Bracketed);
  }

  /// Root of H(zbar(lambda)) = 0 with dir*(lambda - bound) >= 0.
  RootOut bounded_h_root(const Vec& z_k, double bound, bool include_bound) const {
    auto br = scan(z_k, Fn::H, bound, include_bound ? 0.0 : cfg_.dead_band());
    if (!br) throw NoRoot("H(zbar(lambda)) has no root beyond the bound");
    RootOut r = brent(z_k, Fn::H, br->a, br->b, br->ea, br->eb);
    if (auto polished = newton_lambda(z_k, Fn::H, r.lambda)) {
      if (dir_ * (polished->lambda - bound) >= -cfg_.dead_band()) r = *polished;
    }
    if (std::abs(r.eval.h) > cfg_.outer_tol) {
      throw NoConvergence("bounded H solve", cfg_.outer_max_iter, std::abs(r.eval.h));
    }
    return r;
  }

  StepResult ghost_step(const Vec& z_k, double lam_psi_hint, bool has_hint) const {
    auto [lam_psi, e_psi] = lambda_psi(z_k, lam_psi_hint, has_hint);
    RootOut r = bounded_h_root(z_k, lam_psi, true);
    return make_step(z_k, r.lambda, 0.0, r.eval, Branch::Ghost);
  }

  std::pair<StepResult, std::optional<StepResult>> regularized_pair(const Vec& z_k,
                                                                    double lam_psi_seed,
                                                                    bool with_followup) const {
    double lam = lam_psi_seed;
    double mu = 0.0;
    MidEval e = eval_mid(z_k, lam, mu);
    auto merit = [&](const MidEval& ev) {
      return std::max(std::abs(ev.h), std::abs(ev.psi - cfg_.psi_k));
    };
    double best_lam = lam, best_mu = mu;
    MidEval best = e;
    bool converged = merit(e) <= cfg_.outer_tol;
    int polish = 0;
    for (int it = 0; it < cfg_.outer_max_iter; ++it) {
      if (converged && ++polish > 3) break;
      // 2x2 finite-difference Jacobian in (lambda, mu).
      const double hl = 1e-7 * std::max(1.0, std::abs(lam));
      const double hm = 1e-7 * std::max(1.0, std::abs(mu));
      MidEval elp, elm, emp, emm;
      try {
        elp = eval_mid(z_k, lam + hl, mu);
        elm = eval_mid(z_k, lam - hl, mu);
        emp = eval_mid(z_k, lam, mu + hm);
        emm = eval_mid(z_k, lam, mu - hm);
      } catch (const SolverError&) {
        break;
      }
      const double a11 = (elp.h - elm.h) / (2.0 * hl);
      const double a12 = (emp.h - emm.h) / (2.0 * hm);
      const double a21 = (elp.psi - elm.psi) / (2.0 * hl);
      const double a22 = (emp.psi - emm.psi) / (2.0 * hm);
      const double det = a11 * a22 - a12 * a21;
      const double scale = std::max({std::abs(a11) * std::abs(a22), std::abs(a12) * std::abs(a21),
                                     1e-30});
      if (!std::isfinite(det) || std::abs(det) <= 1e-12 * scale) {
        throw DegenerateJacobian(
            "regularized 2x2 solve: H_z and psi_z are not linearly independent here");
      }
      const double r1 = e.h;
      const double r2 = e.psi - cfg_.psi_k;
      double dl = -(a22 * r1 - a12 * r2) / det;
      double dm = -(-a21 * r1 + a11 * r2) / det;
      double step_scale = 1.0;
      bool improved = false;
      for (int halving = 0; halving < 7; ++halving) {
        try {
          MidEval trial = eval_mid(z_k, lam + step_scale * dl, mu + step_scale * dm);
          if (merit(trial) < merit(e)) {
            lam += step_scale * dl;
            mu += step_scale * dm;
            e = std::move(trial);
            improved = true;
            break;
          }
        } catch (const SolverError&) {
        }
        step_scale *= 0.5;
      }
      if (!improved) break;
      if (merit(e) < merit(best)) {
        best = e;
        best_lam = lam;
        best_mu = mu;
      }
      if (merit(best) <= cfg_.outer_tol) converged = true;
    }
    if (!converged) {
      throw NoConvergence("regularized 2x2 solve", cfg_.outer_max_iter, merit(best));
    }
    StepResult first = make_step(z_k, best_lam, best_mu, best, Branch::Regularized);
    if (!with_followup) return {std::move(first), std::nullopt};

    // Follow-up step from the new vertex, constrained past the singular set.
    const Vec z1 = first.z_end.flat();
    double bound = 0.0;
    try {
      auto [lp2, ep2] = lambda_psi(z1, 0.0, false);
      bound = dir_ > 0 ? std::max(0.0, lp2) : std::min(0.0, lp2);
    } catch (const NoRoot&) {
      bound = 0.0;
    }
    RootOut r2 = bounded_h_root(z1, bound, bound != 0.0);
    StepResult second = make_step(z1, r2.lambda, 0.0, r2.eval, Branch::PostCross);
    return {std::move(first), std::move(second)};
  }

  StepResult post_cross_step(const Vec& z_k, double guess) const {
    std::optional<RootOut> newton = newton_lambda(z_k, Fn::H, guess);
    if (newton && dir_ * newton->lambda >= cfg_.dead_band()) {
      return make_step(z_k, newton->lambda, 0.0, newton->eval, Branch::PostCross);
    }
    const RootOut r = bounded_h_root(z_k, 0.0, false);
    return make_step(z_k, r.lambda, 0.0, r.eval, Branch::PostCross);
  }

  const SystemDefinition& sys_;
  SolverConfig cfg_;
  int dir_;
};

Trajectory integrate_impl(const SystemDefinition& sys, const ExtendedState& z0, int num_steps,
                          const SolverConfig& cfg, int dir) {
  cfg.validate();
  z0.validate();
  Trajectory traj;
  if (num_steps <= 0) return traj;

  Engine eng(sys, cfg, dir);
  Vec z = z0.flat();
  check_dim(sys, z, "integrate");
  if (extended_H(sys, z) == 0.0) {
    // Block-1 policy: H(z0) must be small but nonzero, on the side where
    // the first-step equation has a root.
    z[2 * sys.n + 1] += sign_of(psi(sys, z)) * cfg.h0_offset;
  }
  const Vec z_run_start = z;
  double guess = dir * cfg.lambda_seed;

  const auto size = [&]() { return static_cast<int>(traj.steps.size()); };
  const auto accept = [&](StepResult s) {
    traj.steps.push_back(std::move(s));
    const StepResult& st = traj.steps.back();
    if (dir * st.lambda < 0.0) {
      traj.events.push_back({size() - 1, EventKind::NegativeLambda});
    }
    z = st.z_end.flat();
    if (std::abs(st.lambda) > cfg.dead_band()) guess = st.lambda;
  };
  const auto pop_last = [&]() {
    traj.steps.pop_back();
    const int idx = size();
    std::erase_if(traj.events, [idx](const Event& e) {
      return e.step_index == idx && e.kind != EventKind::CrossingDetected;
    });
    z = traj.steps.empty() ? z_run_start : traj.steps.back().z_end.flat();
  };

  try {
    while (size() < num_steps) {
      // Block 3: provisional product-equation step.
      StepResult prov = eng.normal_step(z, guess);
      const bool h_ok = std::abs(prov.h_mid) <= cfg.outer_tol;
      const bool crossed = psi(sys, z) * psi(sys, prov.z_end.flat()) <= 0.0;
      if (h_ok && !crossed) {
        accept(std::move(prov));
        continue;
      }

      // Crossing machinery, blocks 4-8.
      traj.events.push_back({size(), EventKind::CrossingDetected});
      std::optional<std::pair<double, MidEval>> lp;
      try {
        lp = eng.lambda_psi(z, prov.lambda, true);
      } catch (const NoRoot&) {
      }
      if (!lp) {
        if (h_ok) {
          // The segment satisfies the DTH equations and no psi root is
          // reachable from this vertex; keep it.
          accept(std::move(prov));
          continue;
        }
        throw NoRoot("crossing detected but psi(zbar(lambda)) has no root");
      }

      // Block 5: bracketed steps while the bracket exists.
      while (size() < num_steps) {
        const double lam_psi = lp->first;
        if (!(dir * lam_psi >= 0.0)) break;
        const double h_k = extended_H(sys, z);
        const double h_psi = lp->second.h;
        if (h_k * h_psi > 0.0) break;
        StepResult s = eng.bracketed_step(z, lam_psi);
        traj.events.push_back({size(), EventKind::BracketFound});
        accept(std::move(s));
        if (size() >= num_steps) break;
        try {
          lp = eng.lambda_psi(z, 0.0, false);
        } catch (const NoRoot&) {
          lp.reset();
          break;
        }
      }
      if (size() >= num_steps) break;

      // Blocks 6/7: ghost or regularized traversal.
      bool do_ghost = cfg.crossing_mode == CrossingMode::ForceGhost;
      if (!do_ghost) {
        try {
          auto [s1, s2] =
              eng.regularized_pair(z, lp ? lp->first : 0.0, size() + 1 < num_steps);
          traj.events.push_back({size(), EventKind::RegularizedBranch});
          accept(std::move(s1));
          if (s2 && size() < num_steps) accept(std::move(*s2));
        } catch (const SolverError&) {
          if (cfg.crossing_mode == CrossingMode::ForceRegularized) throw;
          do_ghost = true;
        }
      }
      if (do_ghost) {
        double hint = lp ? lp->first : 0.0;
        bool has_hint = lp.has_value();
        if (!traj.steps.empty()) {
          const double h_prev = extended_H(sys, traj.steps.back().z_start.flat());
          const double h_here = extended_H(sys, z);
          if (h_prev * h_here > 0.0) {
            // Rewind one vertex; the ghost segment replaces the last step
            // and jumps across the singular set from there.
            pop_last();
            has_hint = false;
          }
        }
        StepResult s = eng.ghost_step(z, hint, has_hint);
        traj.events.push_back({size(), EventKind::GhostBranch});
        accept(std::move(s));
      }
      if (size() >= num_steps) break;

      // Block 8: one plain H step so the trajectory cannot immediately
      // recross psi = 0.
      StepResult s8 = eng.post_cross_step(z, dir * cfg.lambda_seed);
      accept(std::move(s8));
    }
  } catch (const std::exception& e) {
    traj.failure = IntegrationFailure{e.what(), static_cast<int>(traj.steps.size())};
  }
  return traj;
}

}  // namespace

void SolverConfig::validate() const {
  if (!(inner_tol > 0.0) || !(outer_tol > 0.0)) {
    throw std::invalid_argument("SolverConfig: tolerances must be positive");
  }
  if (inner_tol > outer_tol) {
    throw std::invalid_argument("SolverConfig: inner_tol must not exceed outer_tol");
  }
  if (inner_max_iter < 1 || outer_max_iter < 1) {
    throw std::invalid_argument("SolverConfig: iteration caps must be at least 1");
  }
  if (!(bracket_expansion > 1.0)) {
    throw std::invalid_argument("SolverConfig: bracket_expansion must exceed 1");
  }
  if (!(lambda_seed > 0.0)) {
    throw std::invalid_argument("SolverConfig: lambda_seed must be positive");
  }
  if (!(h0_offset > 0.0)) {
    throw std::invalid_argument("SolverConfig: h0_offset must be positive");
  }
}

ExtendedState solve_midpoint_state(const SystemDefinition& sys, const ExtendedState& z_k,
                                   double lambda, double mu, const SolverConfig& cfg) {
  cfg.validate();
  Engine eng(sys, cfg, 1);
  return ExtendedState::from_flat(eng.solve_mid(z_k.flat(), lambda, mu));
}

double residual_H(const SystemDefinition& sys, const ExtendedState& z_k, double lambda,
                  const SolverConfig& cfg) {
  Engine eng(sys, cfg, 1);
  return eng.eval_mid(z_k.flat(), lambda, 0.0).h;
}

double residual_product(const SystemDefinition& sys, const ExtendedState& z_k, double lambda,
                        const SolverConfig& cfg) {
  Engine eng(sys, cfg, 1);
  MidEval e = eng.eval_mid(z_k.flat(), lambda, 0.0);
  return e.psi * e.h;
}

StepResult step_normal(const SystemDefinition& sys, const ExtendedState& z_k, double lambda_guess,
                       const SolverConfig& cfg) {
  Engine eng(sys, cfg, 1);
  return eng.normal_step(z_k.flat(), lambda_guess);
}

bool detect_crossing(const SystemDefinition& sys, const StepResult& step) {
  return psi(sys, step.z_start) * psi(sys, step.z_end) <= 0.0;
}

std::pair<double, ExtendedState> find_lambda_psi(const SystemDefinition& sys,
                                                 const ExtendedState& z_k,
                                                 const SolverConfig& cfg) {
  Engine eng(sys, cfg, 1);
  auto [lam, e] = eng.lambda_psi(z_k.flat(), 0.0, false);
  return {lam, ExtendedState::from_flat(e.zbar)};
}

StepResult step_bracketed(const SystemDefinition& sys, const ExtendedState& z_k, double lambda_psi,
                          const SolverConfig& cfg) {
  Engine eng(sys, cfg, 1);
  return eng.bracketed_step(z_k.flat(), lambda_psi);
}

StepResult step_ghost(const SystemDefinition& sys, const ExtendedState& z_k,
                      const SolverConfig& cfg) {
  Engine eng(sys, cfg, 1);
  return eng.ghost_step(z_k.flat(), 0.0, false);
}

std::pair<StepResult, StepResult> step_regularized(const SystemDefinition& sys,
                                                   const ExtendedState& z_k,
                                                   const SolverConfig& cfg) {
  Engine eng(sys, cfg, 1);
  double seed = 0.0;
  try {
    seed = eng.lambda_psi(z_k.flat(), 0.0, false).first;
  } catch (const NoRoot&) {
  }
  auto [s1, s2] = eng.regularized_pair(z_k.flat(), seed, true);
  return {std::move(s1), std::move(*s2)};
}

StepResult step_post_cross(const SystemDefinition& sys, const ExtendedState& z_k,
                           const SolverConfig& cfg) {
  Engine eng(sys, cfg, 1);
  return eng.post_cross_step(z_k.flat(), cfg.lambda_seed);
}

ExtendedState with_default_prho(const SystemDefinition& sys, const Vec& q, const Vec& p, double t,
                                const SolverConfig& cfg) {
  if (static_cast<int>(q.size()) != sys.n || static_cast<int>(p.size()) != sys.n) {
    throw std::invalid_argument("with_default_prho: q/p must have length n");
  }
  const double h_phys =
      sys.eval_H(t, ConstSpan(q.data(), q.size()), ConstSpan(p.data(), p.size()));
  ExtendedState z = ExtendedState::from_physical(q, p, t, -h_phys);
  const double side = sign_of(psi(sys, z));
  z.pext.back() = -h_phys + side * cfg.h0_offset;
  return z;
}

Trajectory integrate(const SystemDefinition& sys, const ExtendedState& z0, int num_steps,
                     const SolverConfig& cfg) {
  return integrate_impl(sys, z0, num_steps, cfg, +1);
}

Trajectory integrate_reverse(const SystemDefinition& sys, const ExtendedState& zN, int num_steps,
                             const SolverConfig& cfg) {
  return integrate_impl(sys, zN, num_steps, cfg, -1);
}

}  // namespace sem
