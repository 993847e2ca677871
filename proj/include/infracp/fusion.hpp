#pragma once

// Feature extraction, feature fusion and the detection head.
//
// The feature of an agent is a bird's-eye-view occupancy grid over the ego
// detection range: every point that survives range and ground gating adds one
// to its cell. A second channel keeps the tallest return above ground in each
// cell. Fusion combines occupancy cell-wise (and heights by max); detection
// labels connected occupied regions and fits an oriented box to each.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "infracp/detection_range.hpp"
#include "infracp/geometry.hpp"
#include "infracp/scene.hpp"

namespace infracp {

struct BevGrid {
  DetectionRange range;
  double resolution = 0.4;  // metres per cell
  int nx = 0;
  int ny = 0;
  std::vector<double> cells;   // occupancy, row-major, index iy * nx + ix
  std::vector<double> height;  // tallest return above ground per cell, same layout

  static BevGrid make(const DetectionRange& range, double resolution) {
    if (!(resolution > 0.0)) throw std::invalid_argument("BevGrid: resolution must be positive");
    BevGrid g;
    g.range = range;
    g.resolution = resolution;
    g.nx = static_cast<int>(std::ceil(range.x.extent() / resolution - 1e-9));
    g.ny = static_cast<int>(std::ceil(range.y.extent() / resolution - 1e-9));
    g.cells.assign(static_cast<std::size_t>(g.nx) * g.ny, 0.0);
    g.height.assign(g.cells.size(), 0.0);
    return g;
  }

  double& at(int ix, int iy) { return cells[static_cast<std::size_t>(iy) * nx + ix]; }
  double at(int ix, int iy) const { return cells[static_cast<std::size_t>(iy) * nx + ix]; }

  Vec2 cell_center(int ix, int iy) const {
    return {range.x.lo + (ix + 0.5) * resolution, range.y.lo + (iy + 0.5) * resolution};
  }

  /// Cell holding (x, y), or false when outside the grid.
  bool cell_of(double x, double y, int& ix, int& iy) const {
    if (!range.contains_xy(x, y)) return false;
    ix = std::min(nx - 1, static_cast<int>((x - range.x.lo) / resolution));
    iy = std::min(ny - 1, static_cast<int>((y - range.y.lo) / resolution));
    return true;
  }

  bool same_shape(const BevGrid& o) const {
    return nx == o.nx && ny == o.ny && resolution == o.resolution && range == o.range;
  }

  friend bool operator==(const BevGrid&, const BevGrid&) = default;
};

enum class FusionKind { Early, Late, IntermediateSum, IntermediateMax, IntermediateWeighted };

inline std::string to_string(FusionKind k) {
  switch (k) {
    case FusionKind::Early: return "Early";
    case FusionKind::Late: return "Late";
    case FusionKind::IntermediateSum: return "IntermediateSum";
    case FusionKind::IntermediateMax: return "IntermediateMax";
    case FusionKind::IntermediateWeighted: return "IntermediateWeighted";
  }
  return "?";
}

inline FusionKind fusion_kind_from_string(const std::string& s) {
  for (FusionKind k : {FusionKind::Early, FusionKind::Late, FusionKind::IntermediateSum, FusionKind::IntermediateMax,
                       FusionKind::IntermediateWeighted})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown fusion method: " + s);
}

/// Fusion variant. Weighted fusion carries one weight per grid, ego first.
/// It stands in for learned attention with fixed weights.
struct FusionMethod {
  FusionKind kind = FusionKind::IntermediateSum;
  std::vector<double> weights;

  void validate() const {
    if (kind != FusionKind::IntermediateWeighted) return;
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw std::invalid_argument("FusionMethod: negative weight");
      sum += w;
    }
    if (weights.empty() || std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("FusionMethod: weights must sum to 1");
  }

  friend bool operator==(const FusionMethod&, const FusionMethod&) = default;
};

struct ExtractOptions {
  double ground_z = 0.0;          // ground height in the ego frame
  double ground_clearance = 0.15;  // points this close to the ground are dropped
};

/// Adds the points of an ego-frame cloud to `grid`.
inline void accumulate(BevGrid& grid, std::span<const Vec3> points, const ExtractOptions& opt) {
  const DetectionRange& r = grid.range;
  for (const Vec3& p : points) {
    if (!r.z.contains(p.z) || p.z - opt.ground_z <= opt.ground_clearance) continue;
    int ix, iy;
    if (!grid.cell_of(p.x, p.y, ix, iy)) continue;
    const std::size_t i = static_cast<std::size_t>(iy) * grid.nx + ix;
    grid.cells[i] += 1.0;
    grid.height[i] = std::max(grid.height[i], p.z - opt.ground_z);
  }
}

inline BevGrid extract(std::span<const Vec3> points, const DetectionRange& range, double resolution,
                       const ExtractOptions& opt = {}) {
  BevGrid g = BevGrid::make(range, resolution);
  accumulate(g, points, opt);
  return g;
}

/// Clears cells covered by known static structure (the map), each footprint
/// grown by `margin`. Boxes are in the grid's frame.
inline void mask_static(BevGrid& grid, std::span<const OrientedBox3D> structures, double margin) {
  for (const OrientedBox3D& s : structures) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const Vec2& c : s.bev_corners()) {
      x0 = std::min(x0, c.x);
      x1 = std::max(x1, c.x);
      y0 = std::min(y0, c.y);
      y1 = std::max(y1, c.y);
    }
    const int ix0 = std::max(0, static_cast<int>(std::floor((x0 - margin - grid.range.x.lo) / grid.resolution)));
    const int ix1 = std::min(grid.nx - 1, static_cast<int>(std::floor((x1 + margin - grid.range.x.lo) / grid.resolution)));
    const int iy0 = std::max(0, static_cast<int>(std::floor((y0 - margin - grid.range.y.lo) / grid.resolution)));
    const int iy1 = std::min(grid.ny - 1, static_cast<int>(std::floor((y1 + margin - grid.range.y.lo) / grid.resolution)));
    for (int iy = iy0; iy <= iy1; ++iy)
      for (int ix = ix0; ix <= ix1; ++ix) {
        const Vec2 c = grid.cell_center(ix, iy);
        if (s.contains({c.x, c.y, s.center.z}, margin)) {
          grid.at(ix, iy) = 0.0;
          grid.height[static_cast<std::size_t>(iy) * grid.nx + ix] = 0.0;
        }
      }
  }
}

/// Cell-wise combination of the ego grid with aux grids. Early fusion merges
/// clouds before extraction and Late fusion merges boxes after detection, so
/// for both this is the identity on the ego grid. The height channel is always
/// fused by max.
inline BevGrid fuse(const BevGrid& ego, std::span<const BevGrid> aux, const FusionMethod& method) {
  method.validate();
  for (const BevGrid& g : aux)
    if (!ego.same_shape(g)) throw std::invalid_argument("fuse: grid shape mismatch");
  if (aux.empty() || method.kind == FusionKind::Early || method.kind == FusionKind::Late) return ego;

  BevGrid out = ego;
  for (const BevGrid& g : aux)
    for (std::size_t i = 0; i < out.height.size(); ++i) out.height[i] = std::max(out.height[i], g.height[i]);
  switch (method.kind) {
    case FusionKind::Early:
    case FusionKind::Late:
      return ego;
    case FusionKind::IntermediateSum: {
      if (aux.size() == 1) {
        for (std::size_t i = 0; i < out.cells.size(); ++i) out.cells[i] += aux[0].cells[i];
        return out;
      }
      // Sum each cell in sorted order so the result ignores aux order.
      std::vector<double> v(aux.size() + 1);
      for (std::size_t i = 0; i < out.cells.size(); ++i) {
        v[0] = ego.cells[i];
        bool any = v[0] != 0.0;
        for (std::size_t k = 0; k < aux.size(); ++k) {
          v[k + 1] = aux[k].cells[i];
          any = any || v[k + 1] != 0.0;
        }
        if (!any) continue;
        std::sort(v.begin(), v.end());
        double s = 0.0;
        for (double x : v) s += x;
        out.cells[i] = s;
      }
      return out;
    }
    case FusionKind::IntermediateMax:
      for (const BevGrid& g : aux)
        for (std::size_t i = 0; i < out.cells.size(); ++i) out.cells[i] = std::max(out.cells[i], g.cells[i]);
      return out;
    case FusionKind::IntermediateWeighted: {
      if (method.weights.size() != aux.size() + 1)
        throw std::invalid_argument("fuse: weighted fusion needs one weight per grid");
      for (std::size_t i = 0; i < out.cells.size(); ++i) {
        double s = method.weights[0] * ego.cells[i];
        for (std::size_t k = 0; k < aux.size(); ++k) s += method.weights[k + 1] * aux[k].cells[i];
        out.cells[i] = s;
      }
      return out;
    }
  }
  return out;
}

struct DetectorConfig {
  int min_cluster_cells = 4;
  double ground_z = 0.0;       // ego-frame ground height, for the box z prior
  double evidence_scale = 20.0;  // confidence = 1 - exp(-points / evidence_scale)
  /// Sensor positions in the grid frame. Unseen box sides are completed away
  /// from the one that contributed the most points (nearest on ties).
  std::vector<Vec2> viewpoints{{0.0, 0.0}};
  /// Tolerances when matching a fitted footprint and the tallest return
  /// against the actor catalog.
  double size_tolerance = 0.6;
  double height_tolerance = 0.15;
  /// A footprint thinner than this (metres) is a single observed face.
  double thin_extent = 1.0;
  /// Footprint candidates up to this multiple of the minimum area compete on
  /// edge closeness.
  double area_slack = 1.5;
  /// Occupied cells up to this many cells apart (Chebyshev distance) join the
  /// same component. 1 is plain 8-connectivity; 2 bridges the one-cell gaps
  /// that open along surfaces seen at a grazing angle.
  int link_reach = 2;
};

namespace detail {

struct Component {
  std::vector<Vec2> centers;
  std::vector<std::size_t> cells;
  double weight = 0.0;
  double top = 0.0;
};

/// Components of occupied cells linked within `reach` cells (1 = 8-connected),
/// in row-major order of their first cell.
inline std::vector<Component> label_components(const BevGrid& grid, int reach = 1) {
  std::vector<int> label(grid.cells.size(), -1);
  std::vector<Component> out;
  std::vector<int> stack;
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const std::size_t i0 = static_cast<std::size_t>(iy) * grid.nx + ix;
      if (!(grid.cells[i0] > 0.0) || label[i0] >= 0) continue;
      const int id = static_cast<int>(out.size());
      out.emplace_back();
      Component& comp = out.back();
      label[i0] = id;
      stack.assign(1, static_cast<int>(i0));
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cx = cur % grid.nx, cy = cur / grid.nx;
        comp.centers.push_back(grid.cell_center(cx, cy));
        comp.cells.push_back(static_cast<std::size_t>(cur));
        comp.weight += grid.cells[static_cast<std::size_t>(cur)];
        comp.top = std::max(comp.top, grid.height[static_cast<std::size_t>(cur)]);
        for (int dy = -reach; dy <= reach; ++dy)
          for (int dx = -reach; dx <= reach; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= grid.nx || ny >= grid.ny) continue;
            const std::size_t j = static_cast<std::size_t>(ny) * grid.nx + nx;
            if (grid.cells[j] > 0.0 && label[j] < 0) {
              label[j] = id;
              stack.push_back(static_cast<int>(j));
            }
          }
      }
    }
  }
  return out;
}

/// Moves the centre so that a side of observed extent `observed` grows to
/// `target` away from the viewer; the side facing the viewer stays put. A
/// viewer level with the observed interval sees both of its ends, so the
/// shortfall is split evenly and the centre stays.
inline double complete_axis(double center, double observed, double target, double viewer) {
  if (observed >= target || std::abs(viewer - center) <= 0.5 * observed) return center;
  const double shift = 0.5 * (target - observed);
  return viewer < center ? center + shift : center - shift;
}

}  // namespace detail

namespace detail {

/// Mean distance from each point to the nearest side of `r`.
inline double edge_closeness(const Rect2& r, std::span<const Vec2> points) {
  const Vec2 v{-r.axis.y, r.axis.x};
  double sum = 0.0;
  for (const Vec2& p : points) {
    const Vec2 d = p - r.center;
    const double du = 0.5 * r.extent_major - std::abs(dot(d, r.axis));
    const double dv = 0.5 * r.extent_minor - std::abs(dot(d, v));
    sum += std::min(du, dv);
  }
  return sum / static_cast<double>(points.size());
}

/// Footprint rectangle of a component. The candidates are the rotating
/// calipers rectangles; among those within `area_slack` times the minimum
/// area, the one whose sides the cells hug most closely wins. A car seen from
/// one corner leaves an L of cells, and for an L (a right-triangle hull) the
/// diagonal rectangle ties the aligned one on area.
inline Rect2 fit_footprint(std::span<const Vec2> centers, double area_slack) {
  const std::vector<Rect2> cands = caliper_rects(centers);
  double min_area = std::numeric_limits<double>::infinity();
  for (const Rect2& r : cands) min_area = std::min(min_area, r.extent_major * r.extent_minor);
  const Rect2* best = nullptr;
  double best_close = std::numeric_limits<double>::infinity();
  for (const Rect2& r : cands) {
    if (r.extent_major * r.extent_minor > area_slack * min_area + 1e-12) continue;
    const double close = edge_closeness(r, centers);
    if (close < best_close - 1e-12) {
      best = &r;
      best_close = close;
    }
  }
  return *best;
}

struct Fit {
  OrientedBox3D box;
  const CatalogEntry* entry = nullptr;
};

/// Fits a catalog vehicle to one component, or nothing when no catalog entry
/// can hold it.
inline std::optional<Fit> fit_component(const Component& comp, const DetectorConfig& cfg,
                                        std::span<const BevGrid> evidence) {
  const double max_width = std::max({kCatalog[0].width, kCatalog[1].width, kCatalog[2].width});
  const Rect2 r = fit_footprint(comp.centers, cfg.area_slack);

  // Try the long side as length and as width; the smaller catalog vehicle
  // wins. When both readings give the same vehicle, a thin line of cells that
  // is no longer than a vehicle is wide is read as a front or rear face.
  auto smallest_fit = [&](double len, double wid) -> const CatalogEntry* {
    for (const CatalogEntry& e : kCatalog)
      if (len <= e.length + cfg.size_tolerance && wid <= e.width + cfg.size_tolerance &&
          comp.top <= e.height + cfg.height_tolerance)
        return &e;
    return nullptr;
  };
  const CatalogEntry* as_length = smallest_fit(r.extent_major, r.extent_minor);
  const CatalogEntry* as_width = smallest_fit(r.extent_minor, r.extent_major);
  if (as_length == nullptr && as_width == nullptr) return std::nullopt;
  bool swap = as_length == nullptr;
  if (as_length != nullptr && as_width != nullptr) {
    if (as_width != as_length)
      swap = as_width->length < as_length->length;
    else
      swap = r.extent_minor < cfg.thin_extent && r.extent_major <= max_width + cfg.size_tolerance;
  }
  const CatalogEntry* match = swap ? as_width : as_length;
  Vec2 len_axis = r.axis;
  double obs_len = r.extent_major, obs_wid = r.extent_minor;
  if (swap) {
    len_axis = {-r.axis.y, r.axis.x};
    std::swap(obs_len, obs_wid);
  }

  const Vec2 wid_axis{-len_axis.y, len_axis.x};
  Vec2 viewer = cfg.viewpoints.empty() ? Vec2{} : cfg.viewpoints.front();
  double viewer_support = -1.0;
  for (std::size_t k = 0; k < cfg.viewpoints.size(); ++k) {
    double support = 0.0;
    if (!evidence.empty())
      for (std::size_t i : comp.cells) support += evidence[k].cells[i];
    const Vec2 v = cfg.viewpoints[k];
    if (support > viewer_support || (support == viewer_support && norm(v - r.center) < norm(viewer - r.center))) {
      viewer = v;
      viewer_support = support;
    }
  }
  const double cu = complete_axis(dot(r.center, len_axis), obs_len, match->length, dot(viewer, len_axis));
  const double cv = complete_axis(dot(r.center, wid_axis), obs_wid, match->width, dot(viewer, wid_axis));
  const Vec2 c = cu * len_axis + cv * wid_axis;
  const double conf = std::clamp(1.0 - std::exp(-comp.weight / cfg.evidence_scale), 0.0, 1.0);
  return Fit{OrientedBox3D::make({c.x, c.y, cfg.ground_z + 0.5 * match->height}, match->width, match->length,
                                 match->height, std::atan2(len_axis.y, len_axis.x), Label::Vehicle, conf),
             match};
}

inline Component merged(const Component& a, const Component& b) {
  Component u = a;
  u.centers.insert(u.centers.end(), b.centers.begin(), b.centers.end());
  u.cells.insert(u.cells.end(), b.cells.begin(), b.cells.end());
  u.weight += b.weight;
  u.top = std::max(u.top, b.top);
  return u;
}

}  // namespace detail

/// Detection head. Occupied cells are grouped into components (cells within
/// `link_reach` of each other);
/// each component of at least `min_cluster_cells` cells is fitted with a
/// rotating-calipers rectangle (see fit_footprint). The footprint and the tallest return are then
/// matched to the smallest catalog vehicle that can contain them, and the box
/// is completed to that size on the side hidden from the sensor; components
/// larger than any catalog vehicle are background. z and height come from the
/// matched catalog entry.
///
/// One vehicle often shows up as several components (say, its front seen by
/// one sensor and its rear by another). Components are visited heaviest first
/// and joined to an earlier detection whose box they overlap, provided the
/// union still fits the catalog; growing into a taller class additionally
/// needs returns as tall as that class.
///
/// `evidence`, when given, holds one grid per viewpoint with that sensor's own
/// contribution. The sensor that put the most points into a component is
/// taken as its observer; otherwise the nearest viewpoint is.
inline std::vector<OrientedBox3D> detect(const BevGrid& grid, const DetectorConfig& cfg = {},
                                         std::span<const BevGrid> evidence = {}) {
  if (!evidence.empty() && evidence.size() != cfg.viewpoints.size())
    throw std::invalid_argument("detect: need one evidence grid per viewpoint");
  for (const BevGrid& e : evidence)
    if (!grid.same_shape(e)) throw std::invalid_argument("detect: evidence grid shape mismatch");

  std::vector<detail::Component> comps = detail::label_components(grid, cfg.link_reach);
  std::erase_if(comps, [&](const detail::Component& c) { return static_cast<int>(c.centers.size()) < cfg.min_cluster_cells; });
  std::stable_sort(comps.begin(), comps.end(),
                   [](const detail::Component& a, const detail::Component& b) { return a.weight > b.weight; });

  struct Group {
    detail::Component comp;
    detail::Fit fit;
  };
  std::vector<Group> groups;
  for (const detail::Component& comp : comps) {
    const auto fit = detail::fit_component(comp, cfg, evidence);
    if (!fit) continue;
    bool joined = false;
    for (Group& g : groups) {
      if (bev_intersection_area(g.fit.box, fit->box) <= 0.0) continue;
      detail::Component u = detail::merged(g.comp, comp);
      const auto uf = detail::fit_component(u, cfg, evidence);
      if (!uf) continue;
      const bool grows = uf->entry->height > std::max(g.fit.entry->height, fit->entry->height);
      if (grows && u.top < uf->entry->height - cfg.height_tolerance - 0.5) continue;
      g.comp = std::move(u);
      g.fit = *uf;
      joined = true;
      break;
    }
    if (!joined) groups.push_back({comp, *fit});
  }

  std::vector<OrientedBox3D> out;
  for (const Group& g : groups)
    if (grid.range.contains_xy(g.fit.box.center.x, g.fit.box.center.y)) out.push_back(g.fit.box);
  return out;
}

/// Late fusion: each agent's boxes, given in that agent's frame, are mapped
/// into the frame of the first agent (the ego) through the reported poses,
/// pooled and suppressed.
inline std::vector<OrientedBox3D> late_fuse(std::span<const std::vector<OrientedBox3D>> per_agent_boxes,
                                            std::span<const Pose> reported_poses, double iou_threshold) {
  if (per_agent_boxes.size() != reported_poses.size())
    throw std::invalid_argument("late_fuse: one pose per agent required");
  if (per_agent_boxes.empty()) return {};
  if (per_agent_boxes.size() == 1) return per_agent_boxes[0];
  std::vector<OrientedBox3D> pooled;
  for (std::size_t a = 0; a < per_agent_boxes.size(); ++a)
    for (const OrientedBox3D& b : per_agent_boxes[a])
      pooled.push_back(a == 0 ? b : transform_box(b, reported_poses[a], reported_poses[0]));
  return nms(pooled, iou_threshold);
}

}  // namespace infracp
