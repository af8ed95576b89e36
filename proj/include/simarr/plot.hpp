#pragma once

#include <string>

#include "simarr/improve.hpp"

namespace simarr {

struct PlotOptions {
  double pixels_per_cell = 40.0;
  double tick_seconds = 1.0;  // time markers along each trajectory
};

/// Deterministic SVG: grid, obstacles, one coloured polyline per agent with
/// time markers, start (circle) and goal (square) markers.
std::string render_svg(const ContinuousPlan& plan, const Workspace& ws, const ModelParams& p,
                       const PlotOptions& opts = {});

/// Writes render_svg to `path`; throws IoError.
void emit_plot(const ContinuousPlan& plan, const Workspace& ws, const ModelParams& p, const std::string& path,
               const PlotOptions& opts = {});

}  // namespace simarr
