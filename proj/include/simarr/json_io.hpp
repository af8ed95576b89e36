#pragma once

#include <json.hpp>
#include <string>

#include "simarr/core_model.hpp"

namespace simarr {

using Json = nlohmann::json;

// Samples are stored as flat rows [t, x, y, theta, alpha, omega, v, a, u_omega, u_a].
Json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const Json& j);

Json params_to_json(const ModelParams& p);
ModelParams params_from_json(const Json& j);

Json workspace_to_json(const Workspace& ws);
Workspace workspace_from_json(const Json& j);

Json read_json_file(const std::string& path);
void write_json_file(const Json& j, const std::string& path);

}  // namespace simarr
