#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "run_spec.hpp"
#include "sem/core_state.hpp"

namespace semtool {

/// 17-significant-digit decimal rendering; identical runs produce
/// byte-identical output.
std::string fmt17(double v);

void write_csv(std::ostream& os, const RunSpec& spec, const sem::Trajectory& traj);
void write_events_csv(std::ostream& os, const sem::Trajectory& traj);

nlohmann::json spec_to_json(const RunSpec& spec);
nlohmann::json trajectory_to_json(const sem::Trajectory& traj);

}  // namespace semtool
