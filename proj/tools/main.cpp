#include <fstream>
#include <iostream>

#include <json.hpp>

#include "run_output.hpp"
#include "run_spec.hpp"
#include "sem/diagnostics.hpp"
#include "sem/stepper.hpp"

namespace semtool {
namespace {

constexpr int kExitUsage = 2;
constexpr int kExitSolver = 3;
constexpr int kExitIo = 4;

void emit_error(const std::string& kind, const std::string& message, int steps_completed) {
  nlohmann::json j{{"error", {{"kind", kind}, {"message", message}, {"steps_completed", steps_completed}}}};
  std::cerr << j.dump() << "\n";
}

std::vector<sem::Observable> default_observables(const RunSpec& spec) {
  std::vector<sem::Observable> obs;
  obs.push_back({"prho", [](const sem::ExtendedState& z) { return z.prho(); }, {}});
  if (spec.system == "kepler") {
    obs.push_back({"L",
                   [](const sem::ExtendedState& z) {
                     return z.q(0) * z.p(1) - z.q(1) * z.p(0);
                   },
                   {}});
  }
  return obs;
}

int run(const RunSpec& spec) {
  const sem::SystemDefinition sys = make_system(spec);

  sem::ExtendedState z0;
  try {
    z0 = spec.prho0 ? sem::ExtendedState::from_physical(spec.q0, spec.p0, spec.t0, *spec.prho0)
                    : sem::with_default_prho(sys, spec.q0, spec.p0, spec.t0, spec.cfg);
  } catch (const std::exception& e) {
    emit_error("usage", e.what(), 0);
    return kExitUsage;
  }

  sem::Trajectory traj = sem::integrate(sys, z0, spec.steps, spec.cfg);
  if (traj.failure) {
    emit_error("solver", traj.failure->message, traj.failure->step_index);
    return kExitSolver;
  }

  nlohmann::json diagnostics;
  try {
    if (spec.diag_symplectic) {
      diagnostics["symplecticity_defect"] =
          sem::symplecticity_check(sys, z0, spec.steps, spec.cfg, spec.fd_step);
    }
    if (spec.diag_reverse) {
      diagnostics["reversibility_error"] =
          sem::reversibility_check(sys, z0, spec.steps, spec.cfg);
    }
    if (spec.diag_conservation) {
      const sem::ConservationReport rep =
          sem::conservation_report(sys, traj, default_observables(spec));
      nlohmann::json obs = nlohmann::json::array();
      for (size_t i = 0; i < rep.names.size(); ++i) {
        obs.push_back({{"name", rep.names[i]}, {"max_rel_drift", rep.max_rel_drift[i]}});
      }
      diagnostics["conservation"] = {{"max_abs_H_mid", rep.max_abs_H_mid},
                                     {"observables", std::move(obs)}};
    }
  } catch (const std::exception& e) {
    emit_error("solver", e.what(), static_cast<int>(traj.steps.size()));
    return kExitSolver;
  }

  try {
    if (spec.format == "json") {
      nlohmann::json j = trajectory_to_json(traj);
      j["spec"] = spec_to_json(spec);
      if (!diagnostics.is_null()) j["diagnostics"] = diagnostics;
      if (spec.output.empty()) {
        std::cout << j.dump(2) << "\n";
      } else {
        std::ofstream os(spec.output);
        if (!os) throw std::runtime_error("cannot open " + spec.output);
        os << j.dump(2) << "\n";
        if (!os) throw std::runtime_error("write failed: " + spec.output);
      }
    } else {
      if (spec.output.empty()) {
        write_csv(std::cout, spec, traj);
        if (!diagnostics.is_null()) std::cerr << diagnostics.dump() << "\n";
      } else {
        std::ofstream os(spec.output);
        if (!os) throw std::runtime_error("cannot open " + spec.output);
        write_csv(os, spec, traj);
        if (!os) throw std::runtime_error("write failed: " + spec.output);
        std::ofstream es(spec.output + ".events.csv");
        if (!es) throw std::runtime_error("cannot open " + spec.output + ".events.csv");
        write_events_csv(es, traj);
        if (!es) throw std::runtime_error("write failed: " + spec.output + ".events.csv");
        if (!diagnostics.is_null()) std::cout << diagnostics.dump() << "\n";
      }
    }
  } catch (const std::exception& e) {
    emit_error("io", e.what(), static_cast<int>(traj.steps.size()));
    return kExitIo;
  }
  return 0;
}

}  // namespace
}  // namespace semtool

int main(int argc, char** argv) {
  semtool::RunSpec spec;
  const int rc = semtool::parse_run_spec(argc, argv, spec);
  if (rc == -1) return 0;
  if (rc != 0) return rc;
  return semtool::run(spec);
}
