#include "simarr/plot.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "simarr/errors.hpp"

namespace simarr {

namespace {

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                   "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_svg(const ContinuousPlan& plan, const Workspace& ws, const ModelParams& p,
                       const PlotOptions& opts) {
  const double s = opts.pixels_per_cell / p.cell_size;  // pixels per meter
  const double W = ws.width * opts.pixels_per_cell;
  const double H = ws.height * opts.pixels_per_cell;
  // SVG y grows downwards; flip so that the workspace y axis points up.
  auto X = [&](double x) { return num(x * s); };
  auto Y = [&](double y) { return num(H - y * s); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(W) << "\" height=\"" << num(H)
     << "\" viewBox=\"0 0 " << num(W) << ' ' << num(H) << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << num(W) << "\" height=\"" << num(H)
     << "\" fill=\"white\" stroke=\"black\"/>\n";
  os << "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
  for (int c = 1; c < ws.width; ++c) {
    const double x = c * opts.pixels_per_cell;
    os << "<line x1=\"" << num(x) << "\" y1=\"0\" x2=\"" << num(x) << "\" y2=\"" << num(H) << "\"/>\n";
  }
  for (int r = 1; r < ws.height; ++r) {
    const double y = r * opts.pixels_per_cell;
    os << "<line x1=\"0\" y1=\"" << num(y) << "\" x2=\"" << num(W) << "\" y2=\"" << num(y) << "\"/>\n";
  }
  os << "</g>\n<g fill=\"#444444\">\n";
  for (const auto& c : ws.obstacles) {
    os << "<rect x=\"" << X(c.col * p.cell_size) << "\" y=\"" << Y((c.row + 1) * p.cell_size) << "\" width=\""
       << num(opts.pixels_per_cell) << "\" height=\"" << num(opts.pixels_per_cell) << "\"/>\n";
  }
  os << "</g>\n";

  const double r = p.radius() * s;
  for (std::size_t i = 0; i < plan.trajectories.size(); ++i) {
    const auto& tr = plan.trajectories[i];
    if (tr.empty()) continue;
    const char* color = kColors[i % (sizeof kColors / sizeof kColors[0])];
    os << "<g id=\"agent" << i << "\" stroke=\"" << color << "\" fill=\"none\">\n<polyline stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < tr.size(); ++k) {
      if (k) os << ' ';
      os << X(tr.samples[k].x.x) << ',' << Y(tr.samples[k].x.y);
    }
    os << "\"/>\n";
    if (opts.tick_seconds > 0.0) {
      double next = tr.samples.front().t;
      for (const auto& smp : tr.samples) {
        if (smp.t + 1e-9 < next) continue;
        os << "<circle cx=\"" << X(smp.x.x) << "\" cy=\"" << Y(smp.x.y) << "\" r=\"2\" fill=\"" << color << "\"/>\n";
        next += opts.tick_seconds;
      }
    }
    const auto& a = tr.samples.front().x;
    const auto& b = tr.samples.back().x;
    os << "<circle cx=\"" << X(a.x) << "\" cy=\"" << Y(a.y) << "\" r=\"" << num(r) << "\"/>\n";
    os << "<rect x=\"" << num(b.x * s - r) << "\" y=\"" << num(H - b.y * s - r) << "\" width=\"" << num(2 * r)
       << "\" height=\"" << num(2 * r) << "\"/>\n</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_plot(const ContinuousPlan& plan, const Workspace& ws, const ModelParams& p, const std::string& path,
               const PlotOptions& opts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << render_svg(plan, ws, p, opts);
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace simarr
