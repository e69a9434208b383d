#include "run_output.hpp"

#include <cstdio>
#include <ostream>

namespace semtool {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(std::ostream& os, const RunSpec& spec, const sem::Trajectory& traj) {
  const int n = spec.system == "kepler" ? 2 : 1;
  os << "k,t";
  for (int i = 1; i <= n; ++i) os << ",q" << i;
  for (int i = 1; i <= n; ++i) os << ",p" << i;
  os << ",prho,lambda,mu,branch,H_mid,psi_mid\n";
  int k = 0;
  for (const sem::StepResult& s : traj.steps) {
    os << k++ << ',' << fmt17(s.z_end.t());
    for (int i = 0; i < n; ++i) os << ',' << fmt17(s.z_end.qext[i]);
    for (int i = 0; i < n; ++i) os << ',' << fmt17(s.z_end.pext[i]);
    os << ',' << fmt17(s.z_end.prho()) << ',' << fmt17(s.lambda) << ',' << fmt17(s.mu) << ','
       << sem::branch_name(s.branch) << ',' << fmt17(s.h_mid) << ',' << fmt17(s.psi_mid) << '\n';
  }
}

void write_events_csv(std::ostream& os, const sem::Trajectory& traj) {
  os << "k,event\n";
  for (const sem::Event& e : traj.events) {
    os << e.step_index << ',' << sem::event_name(e.kind) << '\n';
  }
}

nlohmann::json spec_to_json(const RunSpec& spec) {
  nlohmann::json j{{"system", spec.system},
                   {"q0", spec.q0},
                   {"p0", spec.p0},
                   {"t0", spec.t0},
                   {"steps", spec.steps},
                   {"psi_k", spec.cfg.psi_k},
                   {"format", spec.format},
                   {"output", spec.output}};
  if (spec.prho0) {
    j["prho0"] = *spec.prho0;
  } else {
    j["prho0"] = nullptr;
  }
  switch (spec.cfg.crossing_mode) {
    case sem::CrossingMode::Auto: j["mode"] = "auto"; break;
    case sem::CrossingMode::ForceGhost: j["mode"] = "force-ghost"; break;
    case sem::CrossingMode::ForceRegularized: j["mode"] = "force-regularized"; break;
  }
  j["tolerances"] = {{"inner_tol", spec.cfg.inner_tol},
                     {"inner_max_iter", spec.cfg.inner_max_iter},
                     {"outer_tol", spec.cfg.outer_tol},
                     {"outer_max_iter", spec.cfg.outer_max_iter},
                     {"bracket_expansion", spec.cfg.bracket_expansion},
                     {"h0_offset", spec.cfg.h0_offset},
                     {"lambda_seed", spec.cfg.lambda_seed}};
  return j;
}

namespace {

nlohmann::json state_to_json(const sem::ExtendedState& z) {
  return {{"qext", z.qext}, {"pext", z.pext}};
}

}  // namespace

nlohmann::json trajectory_to_json(const sem::Trajectory& traj) {
  nlohmann::json steps = nlohmann::json::array();
  int k = 0;
  for (const sem::StepResult& s : traj.steps) {
    steps.push_back({{"k", k++},
                     {"z_start", state_to_json(s.z_start)},
                     {"z_end", state_to_json(s.z_end)},
                     {"z_mid", state_to_json(s.z_mid)},
                     {"lambda", s.lambda},
                     {"mu", s.mu},
                     {"branch", sem::branch_name(s.branch)},
                     {"H_mid", s.h_mid},
                     {"psi_mid", s.psi_mid}});
  }
  nlohmann::json events = nlohmann::json::array();
  for (const sem::Event& e : traj.events) {
    events.push_back({{"k", e.step_index}, {"event", sem::event_name(e.kind)}});
  }
  nlohmann::json j{{"steps", std::move(steps)}, {"events", std::move(events)}};
  if (traj.failure) {
    j["failure"] = {{"message", traj.failure->message}, {"steps_completed", traj.failure->step_index}};
  }
  return j;
}

}  // namespace semtool
