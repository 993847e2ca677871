#pragma once

// SVG output: line charts of AP against noise level, and bird's-eye
// snapshots of a scene frame (occluders, traffic, sweeps, detections).

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "infracp/experiments.hpp"

namespace infracp::svg {

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  return kColors[i % std::size(kColors)];
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

struct Series {
  std::string name;
  std::vector<std::optional<double>> values;  // one per x label; gaps allowed
};

/// Line chart with categorical x axis and y in [0, 1].
inline std::string line_chart(const std::string& title, const std::vector<std::string>& x_labels,
                              const std::vector<Series>& series, const std::string& y_label = "AP@0.7") {
  const double W = 640, H = 420, left = 60, right = 150, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  const std::size_t n = x_labels.size();
  auto px = [&](std::size_t i) { return left + (n <= 1 ? 0.5 * pw : pw * static_cast<double>(i) / (n - 1)); };
  auto py = [&](double v) { return top + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << detail::escape(title) << "</text>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = 0.2 * k;
    os << "<line x1=\"" << left << "\" y1=\"" << py(v) << "\" x2=\"" << left + pw << "\" y2=\"" << py(v)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << std::setprecision(1) << v
       << "</text>\n";
  }
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < n; ++i)
    os << "<text x=\"" << px(i) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
       << detail::escape(x_labels[i]) << "</text>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">noise setting</text>\n";
  os << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << detail::escape(y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = detail::palette(s);
    std::string path;
    bool pen_down = false;
    for (std::size_t i = 0; i < std::min(n, series[s].values.size()); ++i) {
      const auto& v = series[s].values[i];
      if (!v) {
        pen_down = false;
        continue;
      }
      std::ostringstream pt;
      pt << std::fixed << std::setprecision(1) << (pen_down ? " L" : " M") << px(i) << ' ' << py(*v);
      path += pt.str();
      pen_down = true;
      os << "<circle cx=\"" << px(i) << "\" cy=\"" << py(*v) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    if (!path.empty()) os << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    const double ly = top + 10 + 20 * static_cast<double>(s);
    os << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 35 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 40 << "\" y=\"" << ly + 4 << "\">" << detail::escape(series[s].name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// AP@0.7 against noise setting for every config of `r` that sweeps more than
/// one setting. Nullopt when nothing in the result is a sweep.
inline std::optional<std::string> ap_vs_noise(const ExperimentResult& r) {
  std::vector<std::string> labels;
  std::vector<Series> series;
  for (std::size_t c = 0; c < r.configs.size(); ++c) {
    if (r.configs[c].noise.size() < 2) continue;
    std::vector<std::string> mine;
    for (const NoiseSetting& n : r.configs[c].noise) mine.push_back(n.label());
    if (labels.empty()) labels = mine;
    if (mine != labels) continue;  // only configs sharing the first sweep's axis
    Series s;
    s.name = to_string(r.configs[c].cp_mode);
    if (r.configs[c].range_shape) s.name += " " + to_string(*r.configs[c].range_shape);
    for (const EvalReport& e : r.reports[c]) s.values.push_back(e.mean_scene_ap70);
    series.push_back(std::move(s));
  }
  if (series.empty()) return std::nullopt;
  return line_chart("AP@0.7 vs noise (" + r.name + ")", labels, series);
}

// ---------------------------------------------------------------------------
// Scene snapshots

struct RenderOptions {
  int frame = 0;
  /// Overlay the detections of this mode's ego (and its range and sweeps).
  std::optional<CpMode> cp_mode;
  NoiseSetting noise;
  double px_per_m = 4.0;
  double margin_m = 40.0;
};

/// World-frame BEV picture of one frame. Every agent's sweep is drawn,
/// thinned to one dot per 0.5 m cell.
inline std::string render_scene(const Scene& scene, const RenderOptions& opt) {
  if (opt.frame < 0 || opt.frame >= static_cast<int>(scene.frames.size()))
    throw std::out_of_range("render: frame index out of bounds");
  const std::size_t f = static_cast<std::size_t>(opt.frame);
  const Frame& fr = scene.frames[f];

  SweepCache cache(scene);
  std::vector<int> shown;
  std::optional<AgentSelection> sel;
  if (opt.cp_mode) {
    sel = select_agents(*opt.cp_mode, scene.spec);
    shown.push_back(sel->ego);
    shown.insert(shown.end(), sel->aux.begin(), sel->aux.end());
  } else {
    for (const AgentSpec& a : scene.agents) shown.push_back(a.id);
  }

  // Frame the picture on the participating agents.
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (int id : shown) {
    const Pose& p = fr.agent_poses.at(static_cast<std::size_t>(id));
    x0 = std::min(x0, p.x), x1 = std::max(x1, p.x), y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
  }
  x0 -= opt.margin_m, x1 += opt.margin_m, y0 -= opt.margin_m, y1 += opt.margin_m;
  const double s = opt.px_per_m;
  const double W = (x1 - x0) * s, H = (y1 - y0) * s;
  auto X = [&](double x) { return (x - x0) * s; };
  auto Y = [&](double y) { return (y1 - y) * s; };

  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  auto polygon = [&](const OrientedBox3D& b, const char* fill, const char* stroke, double width, double opacity) {
    os << "<polygon points=\"";
    for (const Vec2& c : b.bev_corners()) os << X(c.x) << ',' << Y(c.y) << ' ';
    os << "\" fill=\"" << fill << "\" fill-opacity=\"" << opacity << "\" stroke=\"" << stroke << "\" stroke-width=\""
       << width << "\"/>\n";
  };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const OrientedBox3D& o : scene.occluders) polygon(o, "#9e9e9e", "#616161", 1.0, 0.6);

  for (std::size_t k = 0; k < shown.size(); ++k) {
    const AgentSpec& a = scene.agents.at(static_cast<std::size_t>(shown[k]));
    const Pose& pose = fr.agent_poses[static_cast<std::size_t>(a.id)];
    const auto cloud = cache.get(a, opt.frame);
    std::set<std::pair<long, long>> cells;
    os << "<g fill=\"" << detail::palette(k) << "\" fill-opacity=\"0.5\">\n";
    for (const Vec3& p : transform_to_frame(cloud->points, pose, Pose{})) {
      if (p.z < 0.15 || p.x < x0 || p.x > x1 || p.y < y0 || p.y > y1) continue;  // ground and off-canvas
      if (!cells.emplace(std::lround(p.x * 2.0), std::lround(p.y * 2.0)).second) continue;
      os << "<circle cx=\"" << X(p.x) << "\" cy=\"" << Y(p.y) << "\" r=\"0.8\"/>\n";
    }
    os << "</g>\n";
  }

  for (const SceneObject& obj : frame_objects(scene, f))
    polygon(obj.box, "none", obj.agent ? "#000000" : "#2e7d32", 1.5, 0.0);

  if (opt.cp_mode) {
    PipelineSettings ps;
    ps.cp_mode = *opt.cp_mode;
    const AgentSpec& ego = scene.agents.at(static_cast<std::size_t>(sel->ego));
    ps.range = resolve_range(ego.kind, scene.spec.regime, std::nullopt);
    const Pose& ego_pose = fr.agent_poses[static_cast<std::size_t>(ego.id)];
    const FrameOutcome fo = run_frame(scene, opt.frame, ps, ChannelConfig{opt.noise, scene.spec.seed}, cache.source());
    const OrientedBox3D range_box =
        OrientedBox3D::make({0.5 * (ps.range.x.lo + ps.range.x.hi), 0.5 * (ps.range.y.lo + ps.range.y.hi), 0.0},
                            ps.range.y.extent(), ps.range.x.extent(), 1.0, 0.0);
    os << "<g stroke-dasharray=\"6,4\">\n";
    polygon(transform_box(range_box, ego_pose, Pose{}), "none", "#1565c0", 1.0, 0.0);
    os << "</g>\n";
    for (const OrientedBox3D& p : fo.predictions) polygon(transform_box(p, ego_pose, Pose{}), "none", "#c62828", 1.5, 0.0);
  }

  for (std::size_t k = 0; k < shown.size(); ++k) {
    const AgentSpec& a = scene.agents.at(static_cast<std::size_t>(shown[k]));
    const Pose& p = fr.agent_poses[static_cast<std::size_t>(a.id)];
    const bool is_ego = sel && a.id == sel->ego;
    os << "<circle cx=\"" << X(p.x) << "\" cy=\"" << Y(p.y) << "\" r=\"" << (is_ego ? 6 : 4) << "\" fill=\""
       << detail::palette(k) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << X(p.x) + 8 << "\" y=\"" << Y(p.y) - 8 << "\">" << to_string(a.kind) << a.id
       << (is_ego ? " (ego)" : "") << "</text>\n";
  }
  os << "<text x=\"10\" y=\"20\">" << detail::escape(to_string(scene.spec.archetype)) << " seed " << scene.spec.seed
     << " frame " << opt.frame;
  if (opt.cp_mode) os << " | " << to_string(*opt.cp_mode) << ": green = truth, red = detections";
  os << "</text>\n</svg>\n";
  return os.str();
}

}  // namespace infracp::svg
