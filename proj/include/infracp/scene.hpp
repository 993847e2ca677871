#pragma once

// Procedural traffic scenes: a static layout of roads and occluders, moving
// traffic, and the sensing agents (vehicles and roadside infrastructure).
//
// Traffic follows lane centerlines at constant speed. Every random choice is
// drawn from streams derived from the scenario seed, so a (spec, seed) pair
// always produces the same scene.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "infracp/detection_range.hpp"
#include "infracp/geometry.hpp"
#include "infracp/rng.hpp"

namespace infracp {

enum class AgentKind { Vehicle, Infrastructure };

inline std::string to_string(AgentKind k) { return k == AgentKind::Vehicle ? "V" : "I"; }

enum class Archetype { FourWayIntersection, ThreeWayIntersection, MergeRamp, TwinIntersections };

inline std::string to_string(Archetype a) {
  switch (a) {
    case Archetype::FourWayIntersection: return "FourWayIntersection";
    case Archetype::ThreeWayIntersection: return "ThreeWayIntersection";
    case Archetype::MergeRamp: return "MergeRamp";
    case Archetype::TwinIntersections: return "TwinIntersections";
  }
  return "?";
}

inline Archetype archetype_from_string(const std::string& s) {
  for (Archetype a : {Archetype::FourWayIntersection, Archetype::ThreeWayIntersection, Archetype::MergeRamp,
                      Archetype::TwinIntersections})
    if (to_string(a) == s) return a;
  throw std::invalid_argument("unknown archetype: " + s);
}

/// Which published range regime the scene is built for. It fixes the
/// infrastructure mount height so that the regime's z intervals line up.
enum class Regime { V2XSet, V2XSim };

inline std::string to_string(Regime r) { return r == Regime::V2XSet ? "V2XSet" : "V2XSim"; }

inline Regime regime_from_string(const std::string& s) {
  if (s == "V2XSet") return Regime::V2XSet;
  if (s == "V2XSim") return Regime::V2XSim;
  throw std::invalid_argument("unknown regime: " + s);
}

namespace mounts {
inline constexpr double kVehicleSensorHeight = 1.9;
inline constexpr double kInfraSensorHeightSet = 4.5;
inline constexpr double kInfraSensorHeightSim = 7.4;

inline double infra_height(Regime r) { return r == Regime::V2XSet ? kInfraSensorHeightSet : kInfraSensorHeightSim; }
}  // namespace mounts

struct AgentSpec {
  int id = 0;  // index into Scene::agents and Frame::agent_poses
  AgentKind kind = AgentKind::Vehicle;
  Pose mount_pose;  // sensor origin at frame 0
  bool is_ego = false;

  friend bool operator==(const AgentSpec&, const AgentSpec&) = default;
};

struct ScenarioSpec {
  Archetype archetype = Archetype::FourWayIntersection;
  int n_vehicle_agents = 3;
  int n_infra_agents = 1;
  int n_actors = 20;
  double occluder_density = 0.5;
  int n_frames = 20;
  std::uint64_t seed = 0;
  Regime regime = Regime::V2XSet;

  void validate() const {
    if (n_vehicle_agents < 1) throw std::invalid_argument("ScenarioSpec: need at least one vehicle agent");
    if (n_infra_agents < 0 || n_actors < 0) throw std::invalid_argument("ScenarioSpec: negative count");
    if (n_frames < 1) throw std::invalid_argument("ScenarioSpec: need at least one frame");
    if (!(occluder_density >= 0.0 && occluder_density <= 1.0))
      throw std::invalid_argument("ScenarioSpec: occluder_density outside [0,1]");
  }

  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

struct Frame {
  std::vector<OrientedBox3D> actors;
  std::vector<Pose> agent_poses;  // sensor poses, indexed by agent id

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct Scene {
  ScenarioSpec spec;
  double frame_dt = 0.1;
  std::vector<OrientedBox3D> occluders;
  std::vector<Frame> frames;
  std::vector<AgentSpec> agents;

  friend bool operator==(const Scene&, const Scene&) = default;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Actor catalog

struct CatalogEntry {
  const char* name;
  double length;
  double width;
  double height;
};

inline constexpr CatalogEntry kCatalog[] = {
    {"sedan", 4.5, 2.0, 1.6},
    {"van", 6.0, 2.4, 2.4},
    {"bus", 12.0, 2.5, 3.5},
};

inline constexpr const CatalogEntry& kSedan = kCatalog[0];

/// The footprint a vehicle agent occupies: a sedan centred under its sensor.
inline OrientedBox3D vehicle_body(const Pose& sensor_pose) {
  return OrientedBox3D::make({sensor_pose.x, sensor_pose.y, 0.5 * kSedan.height}, kSedan.width, kSedan.length,
                             kSedan.height, sensor_pose.yaw);
}

/// A physical object in a frame together with the agent that carries it
/// (nullopt for ordinary traffic).
struct SceneObject {
  OrientedBox3D box;
  std::optional<int> agent;
};

/// Traffic actors followed by the bodies of vehicle agents.
inline std::vector<SceneObject> frame_objects(const Scene& scene, std::size_t frame) {
  if (frame >= scene.frames.size()) throw std::out_of_range("frame index out of bounds");
  const Frame& f = scene.frames[frame];
  std::vector<SceneObject> out;
  out.reserve(f.actors.size() + scene.agents.size());
  for (const auto& a : f.actors) out.push_back({a, std::nullopt});
  for (const AgentSpec& ag : scene.agents)
    if (ag.kind == AgentKind::Vehicle) out.push_back({vehicle_body(f.agent_poses[ag.id]), ag.id});
  return out;
}

inline const Pose& agent_pose(const Scene& scene, std::size_t frame, int agent_id) {
  if (frame >= scene.frames.size()) throw std::out_of_range("frame index out of bounds");
  return scene.frames[frame].agent_poses.at(static_cast<std::size_t>(agent_id));
}

/// Objects whose centers, expressed in the ego frame, fall inside `range`.
/// Boxes come back in the ego frame. The body of `ego_agent`, if given, is
/// never part of its own ground truth.
inline std::vector<OrientedBox3D> ground_truth(const Scene& scene, std::size_t frame, const DetectionRange& range,
                                               const Pose& ego_pose, std::optional<int> ego_agent = std::nullopt) {
  const Pose world{};
  std::vector<OrientedBox3D> out;
  for (const SceneObject& obj : frame_objects(scene, frame)) {
    if (ego_agent && obj.agent == ego_agent) continue;
    OrientedBox3D b = transform_box(obj.box, world, ego_pose);
    if (range.contains(b.center)) out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lane geometry

/// Arc-length parameterised polyline. Queries outside [0, length] continue
/// along the first or last segment.
class Path {
 public:
  Path() = default;
  explicit Path(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    if (pts_.size() < 2) throw std::invalid_argument("Path: need two points");
    cum_.assign(pts_.size(), 0.0);
    for (std::size_t i = 1; i < pts_.size(); ++i) cum_[i] = cum_[i - 1] + norm(pts_[i] - pts_[i - 1]);
  }

  double length() const { return cum_.back(); }

  /// Position and heading at arc length `s`.
  std::pair<Vec2, double> at(double s) const {
    std::size_t i = 0;
    if (s <= 0.0) {
      i = 0;
    } else if (s >= length()) {
      i = pts_.size() - 2;
    } else {
      i = static_cast<std::size_t>(std::upper_bound(cum_.begin(), cum_.end(), s) - cum_.begin()) - 1;
      i = std::min(i, pts_.size() - 2);
    }
    const Vec2 a = pts_[i], b = pts_[i + 1];
    const double seg = cum_[i + 1] - cum_[i];
    const Vec2 dir = (1.0 / seg) * (b - a);
    return {a + (s - cum_[i]) * dir, std::atan2(dir.y, dir.x)};
  }

 private:
  std::vector<Vec2> pts_;
  std::vector<double> cum_;
};

namespace detail {

class PathBuilder {
 public:
  explicit PathBuilder(Vec2 start) { pts_.push_back(start); }

  PathBuilder& line_to(Vec2 p) {
    pts_.push_back(p);
    return *this;
  }

  /// Circular arc around `center` to the point at angle `to_angle`, sampled
  /// roughly every metre.
  PathBuilder& arc_to(Vec2 center, double to_angle) {
    const Vec2 from = pts_.back();
    const double r = norm(from - center);
    const double a0 = std::atan2(from.y - center.y, from.x - center.x);
    const double sweep = normalize_angle(to_angle - a0);
    const int n = std::max(2, static_cast<int>(std::ceil(std::abs(sweep) * r)));
    for (int k = 1; k <= n; ++k) {
      const double a = a0 + sweep * k / n;
      pts_.push_back({center.x + r * std::cos(a), center.y + r * std::sin(a)});
    }
    return *this;
  }

  Path build() const { return Path(pts_); }

 private:
  std::vector<Vec2> pts_;
};

struct Lane {
  Path path;
  double speed_lo = 8.0;
  double speed_hi = 12.0;
  double spawn_lo = 0.0;  // admissible arc-length interval for frame-0 placement
  double spawn_hi = 0.0;
  double weight = 1.0;
};

/// Where a vehicle agent starts: lane index and frame-0 arc-length interval.
struct AgentSlot {
  std::size_t lane = 0;
  double s_lo = 0.0;
  double s_hi = 0.0;
};

struct Layout {
  std::vector<Lane> lanes;
  std::vector<OrientedBox3D> occluders;
  std::vector<AgentSlot> agent_slots;  // vehicle agents in id order; extras reuse the last slots
  std::vector<Pose> infra_sites;       // sensor poses for infrastructure agents
};

inline OrientedBox3D building(double x0, double y0, double x1, double y1, double h) {
  return OrientedBox3D::make({0.5 * (x0 + x1), 0.5 * (y0 + y1), 0.5 * h}, std::abs(y1 - y0), std::abs(x1 - x0), h,
                             0.0, Label::NotVehicle);
}

/// Straight lane from `a` to `b` with spawn window given as fractions of its
/// length.
inline Lane straight_lane(Vec2 a, Vec2 b, double v_lo, double v_hi, double f_lo = 0.0, double f_hi = 1.0,
                          double weight = 1.0) {
  Path p({a, b});
  return {p, v_lo, v_hi, f_lo * p.length(), f_hi * p.length(), weight};
}

inline Lane lane_from(Path p, double v_lo, double v_hi, double s_lo, double s_hi, double weight) {
  return {std::move(p), v_lo, v_hi, s_lo, s_hi, weight};
}

// Lane offsets from a road centerline (right-hand traffic, two lanes each way).
inline constexpr double kInner = 1.75;
inline constexpr double kOuter = 5.25;
inline constexpr double kRoadReach = 160.0;  // half-length of generated roads
inline constexpr double kSetback = 12.0;     // building line distance from road centerline

/// Corner blocks around an intersection at `cx` plus building rows along the
/// arms listed in `arms` (0:+x 1:+y 2:-x 3:-y). A candidate is kept when its
/// draw falls under the occupancy probability.
inline void add_intersection_buildings(std::vector<OrientedBox3D>& out, rng::Engine& eng, double cx, double density,
                                       std::array<bool, 4> arms, std::array<bool, 4> corners, double reach_lo,
                                       double reach_hi) {
  const double corner_p = std::min(1.0, 2.0 * density);
  // Corners: quadrants (+,+), (-,+), (-,-), (+,-).
  const int sx[4] = {1, -1, -1, 1};
  const int sy[4] = {1, 1, -1, -1};
  for (int q = 0; q < 4; ++q) {
    const double depth_x = rng::uniform(eng, 18.0, 30.0);
    const double depth_y = rng::uniform(eng, 18.0, 30.0);
    const double h = rng::uniform(eng, 10.0, 25.0);
    const double draw = rng::uniform(eng, 0.0, 1.0);
    if (!corners[q] || draw >= corner_p) continue;
    const double x0 = cx + sx[q] * kSetback, x1 = cx + sx[q] * (kSetback + depth_x);
    const double y0 = sy[q] * kSetback, y1 = sy[q] * (kSetback + depth_y);
    out.push_back(building(std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1), h));
  }
  // Rows along the arms, both sides.
  for (int arm = 0; arm < 4; ++arm) {
    for (int side : {-1, 1}) {
      double t = kSetback + 32.0;
      while (t < reach_hi) {
        const double len = rng::uniform(eng, 15.0, 35.0);
        const double gap = rng::uniform(eng, 6.0, 14.0);
        const double depth = rng::uniform(eng, 10.0, 20.0);
        const double h = rng::uniform(eng, 8.0, 20.0);
        const double draw = rng::uniform(eng, 0.0, 1.0);
        const double t1 = std::min(t + len, reach_hi);
        if (arms[arm] && draw < density && t1 - t > 5.0 && t >= reach_lo) {
          const double o0 = side * kSetback, o1 = side * (kSetback + depth);
          double x0, x1, y0, y1;
          switch (arm) {
            case 0: x0 = cx + t; x1 = cx + t1; y0 = o0; y1 = o1; break;
            case 2: x0 = cx - t1; x1 = cx - t; y0 = o0; y1 = o1; break;
            case 1: y0 = t; y1 = t1; x0 = cx + o0; x1 = cx + o1; break;
            default: y0 = -t1; y1 = -t; x0 = cx + o0; x1 = cx + o1; break;
          }
          out.push_back(building(std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1), h));
        }
        t = t1 + gap;
      }
    }
  }
}

/// Through lanes and turning movements for an intersection centred at
/// (cx, 0). `arms` marks which of +x, +y, -x, -y exist.
inline void add_intersection_lanes(std::vector<Lane>& lanes, double cx, std::array<bool, 4> arms, double x_lo,
                                   double x_hi, double v_lo, double v_hi) {
  const double R = kRoadReach;
  // East-west through traffic (always present).
  if (arms[0] && arms[2]) {
    for (double off : {kInner, kOuter}) {
      lanes.push_back(straight_lane({x_lo, -off}, {x_hi, -off}, v_lo, v_hi, 0.0, 1.0, 2.0));  // eastbound
      lanes.push_back(straight_lane({x_hi, off}, {x_lo, off}, v_lo, v_hi, 0.0, 1.0, 2.0));    // westbound
    }
  }
  if (arms[1] && arms[3]) {
    for (double off : {kInner, kOuter}) {
      lanes.push_back(straight_lane({cx + off, -R}, {cx + off, R}, v_lo, v_hi));  // northbound
      lanes.push_back(straight_lane({cx - off, R}, {cx - off, -R}, v_lo, v_hi));  // southbound
    }
  } else if (arms[1]) {
    // Branch road to the north only: two-way stub.
    for (double off : {kInner, kOuter}) {
      lanes.push_back(straight_lane({cx + off, 8.0}, {cx + off, R}, v_lo, v_hi));
      lanes.push_back(straight_lane({cx - off, R}, {cx - off, 8.0}, v_lo, v_hi, 0.0, 0.95));
    }
  }
  // Turning movements through the junction box.
  const double e = 9.0;  // junction half-size where turns start
  const double approach = 0.7 * R - e - 5.0;  // spawn window on the straight approach
  if (arms[1]) {
    // Eastbound inner turning left (north).
    Path left = PathBuilder({cx - R * 0.7, -kInner})
                    .line_to({cx - e, -kInner})
                    .arc_to({cx - e, e}, 0.0)
                    .line_to({cx + kInner, R})
                    .build();
    lanes.push_back(lane_from(left, v_lo * 0.8, v_hi * 0.8, 0.0, approach, 1.0));
    // Southbound inner from north turning left onto eastbound.
    Path south_left = PathBuilder({cx - kInner, R * 0.7})
                          .line_to({cx - kInner, e})
                          .arc_to({cx + e, e}, -kPi / 2.0)
                          .line_to({x_hi, -kInner})
                          .build();
    lanes.push_back(lane_from(south_left, v_lo * 0.8, v_hi * 0.8, 0.0, approach, 1.0));
  }
  if (arms[3]) {
    // Eastbound outer turning right (south).
    Path right = PathBuilder({cx - R * 0.7, -kOuter})
                     .line_to({cx - e, -kOuter})
                     .arc_to({cx - e, -e}, 0.0)
                     .line_to({cx - kOuter, -R})
                     .build();
    lanes.push_back(lane_from(right, v_lo * 0.7, v_hi * 0.7, 0.0, approach, 1.0));
  }
  if (arms[1]) {
    // Westbound outer turning right (north).
    Path right = PathBuilder({cx + R * 0.7, kOuter})
                     .line_to({cx + e, kOuter})
                     .arc_to({cx + e, e}, kPi)
                     .line_to({cx + kOuter, R})
                     .build();
    lanes.push_back(lane_from(right, v_lo * 0.7, v_hi * 0.7, 0.0, approach, 1.0));
  }
}

inline Layout four_way(rng::Engine& eng, double density, Regime regime) {
  Layout L;
  add_intersection_lanes(L.lanes, 0.0, {true, true, true, true}, -kRoadReach, kRoadReach, 8.0, 13.0);
  if (density > 0.0)
    add_intersection_buildings(L.occluders, eng, 0.0, density, {true, true, true, true}, {true, true, true, true},
                               0.0, kRoadReach);
  // Lanes 0..3: EW (eastbound inner, westbound inner, eastbound outer, westbound outer).
  const double h = mounts::infra_height(regime);
  L.infra_sites.push_back(Pose(-9.0, -9.0, h, kPi / 2.0));
  // Ego approaches from the west, one aux vehicle leads past the junction,
  // the next trails the ego.
  L.agent_slots.push_back({0, kRoadReach - 78.0, kRoadReach - 64.0});
  L.agent_slots.push_back({0, kRoadReach + 22.0, kRoadReach + 45.0});
  L.agent_slots.push_back({2, kRoadReach - 90.0, kRoadReach - 68.0});
  return L;
}

inline Layout three_way(rng::Engine& eng, double density, Regime regime) {
  Layout L;
  add_intersection_lanes(L.lanes, 0.0, {true, true, true, false}, -kRoadReach, kRoadReach, 8.0, 13.0);
  if (density > 0.0) {
    add_intersection_buildings(L.occluders, eng, 0.0, density, {true, true, true, false}, {true, true, false, false},
                               0.0, kRoadReach);
    // Continuous frontage on the closed (south) side.
    double x = -kRoadReach;
    while (x < kRoadReach) {
      const double len = rng::uniform(eng, 20.0, 45.0);
      const double h = rng::uniform(eng, 10.0, 22.0);
      const double draw = rng::uniform(eng, 0.0, 1.0);
      const double x1 = std::min(x + len, kRoadReach);
      if (draw < std::min(1.0, 1.5 * density)) L.occluders.push_back(building(x, -kSetback - 18.0, x1, -kSetback, h));
      x = x1 + rng::uniform(eng, 3.0, 8.0);
    }
  }
  const double h = mounts::infra_height(regime);
  L.infra_sites.push_back(Pose(-9.0, 9.0, h, kPi / 2.0));
  L.agent_slots.push_back({0, kRoadReach - 78.0, kRoadReach - 64.0});
  L.agent_slots.push_back({0, kRoadReach + 22.0, kRoadReach + 45.0});
  L.agent_slots.push_back({2, kRoadReach - 90.0, kRoadReach - 68.0});
  return L;
}

inline Layout merge_ramp(rng::Engine& eng, double density, Regime regime) {
  Layout L;
  const double R = kRoadReach;
  // Freeway: eastbound at y<0, westbound at y>0.
  for (double off : {kInner, kOuter}) {
    L.lanes.push_back(straight_lane({-R, -off}, {R, -off}, 20.0, 26.0, 0.0, 0.85, 3.0));
    L.lanes.push_back(straight_lane({R, off}, {-R, off}, 20.0, 26.0, 0.15, 1.0, 1.5));
  }
  // On-ramp running parallel behind a noise barrier, then merging.
  const double ramp_y = -14.0;
  Path ramp = PathBuilder({-R, ramp_y}).line_to({-40.0, ramp_y}).line_to({10.0, -kOuter}).line_to({R, -kOuter}).build();
  L.lanes.push_back(lane_from(ramp, 13.0, 16.0, 0.0, 110.0, 1.0));  // lane 4
  if (density > 0.0) {
    // Barrier between ramp and freeway: taller than a car-mounted sensor,
    // lower than the roadside unit.
    L.occluders.push_back(
        OrientedBox3D::make({-0.5 * (R + 45.0), -9.6, 1.5}, 0.6, R - 45.0, 3.0, 0.0, Label::NotVehicle));
    // Commercial buildings beyond the ramp and north of the freeway.
    double x = -R;
    while (x < R) {
      const double len = rng::uniform(eng, 20.0, 40.0);
      const double gap = rng::uniform(eng, 8.0, 20.0);
      const double h = rng::uniform(eng, 8.0, 18.0);
      const double x1 = std::min(x + len, R);
      if (rng::uniform(eng, 0.0, 1.0) < density) L.occluders.push_back(building(x, 14.0, x1, 14.0 + 15.0, h));
      if (rng::uniform(eng, 0.0, 1.0) < density && x1 < -50.0)
        L.occluders.push_back(building(x, -40.0, x1, -22.0, h));
      x = x1 + gap;
    }
  }
  const double h = mounts::infra_height(regime);
  L.infra_sites.push_back(Pose(-60.0, 10.0, h, 0.0));
  // Ego and aux vehicles on the ramp behind the barrier; the trailing aux
  // vehicle sits behind ramp traffic.
  L.agent_slots.push_back({4, 65.0, 80.0});
  L.agent_slots.push_back({4, 92.0, 105.0});
  L.agent_slots.push_back({4, 20.0, 35.0});
  return L;
}

inline Layout twin_intersections(rng::Engine& eng, double density, Regime regime) {
  Layout L;
  const double gap = 150.0;
  const double R = kRoadReach;
  // Shared east-west arterial through both junctions.
  add_intersection_lanes(L.lanes, 0.0, {true, true, true, true}, -R, R + gap, 8.0, 13.0);
  // Cross street at the second junction.
  for (double off : {kInner, kOuter}) {
    L.lanes.push_back(straight_lane({gap + off, -R}, {gap + off, R}, 8.0, 13.0, 0.25, 0.75, 1.5));
    L.lanes.push_back(straight_lane({gap - off, R}, {gap - off, -R}, 8.0, 13.0, 0.25, 0.75, 1.5));
  }
  if (density > 0.0) {
    add_intersection_buildings(L.occluders, eng, 0.0, density, {false, true, true, true}, {true, true, true, true},
                               0.0, 0.75 * R);
    add_intersection_buildings(L.occluders, eng, gap, density, {true, true, false, true}, {true, true, true, true},
                               0.0, 0.75 * R);
    // Buildings lining the block between the two junctions.
    for (int side : {-1, 1}) {
      const double y0 = side * kSetback, y1 = side * (kSetback + 16.0);
      if (rng::uniform(eng, 0.0, 1.0) < std::min(1.0, 2.0 * density))
        L.occluders.push_back(
            building(0.38 * gap, std::min(y0, y1), 0.62 * gap, std::max(y0, y1), rng::uniform(eng, 10.0, 20.0)));
    }
  }
  const double h = mounts::infra_height(regime);
  L.infra_sites.push_back(Pose(-9.0, -9.0, h, kPi / 2.0));
  // Ego between the junctions heading for the second one; the first aux
  // vehicle trails near the first junction; the last aux vehicle sits at the
  // far junction on the cross street.
  L.agent_slots.push_back({0, R + gap - 55.0, R + gap - 35.0});
  L.agent_slots.push_back({0, R - 25.0, R - 5.0});
  L.agent_slots.push_back({L.lanes.size() - 4, R - 40.0, R - 22.0});
  return L;
}

inline Layout make_layout(const ScenarioSpec& spec, rng::Engine& eng) {
  switch (spec.archetype) {
    case Archetype::FourWayIntersection: return four_way(eng, spec.occluder_density, spec.regime);
    case Archetype::ThreeWayIntersection: return three_way(eng, spec.occluder_density, spec.regime);
    case Archetype::MergeRamp: return merge_ramp(eng, spec.occluder_density, spec.regime);
    case Archetype::TwinIntersections: return twin_intersections(eng, spec.occluder_density, spec.regime);
  }
  throw std::invalid_argument("unknown archetype");
}

struct Trajectory {
  std::size_t lane = 0;
  double s0 = 0.0;
  double speed = 0.0;
  CatalogEntry size = kSedan;
};

inline OrientedBox3D box_at(const Layout& L, const Trajectory& tr, double t) {
  auto [p, heading] = L.lanes[tr.lane].path.at(tr.s0 + tr.speed * t);
  return OrientedBox3D::make({p.x, p.y, 0.5 * tr.size.height}, tr.size.width, tr.size.length, tr.size.height,
                             heading);
}

inline OrientedBox3D inflated(const OrientedBox3D& b, double along, double across) {
  OrientedBox3D out = b;
  out.length += along;
  out.width += across;
  return out;
}

inline bool footprints_overlap(const OrientedBox3D& a, const OrientedBox3D& b) {
  const double ra = 0.5 * std::hypot(a.length, a.width), rb = 0.5 * std::hypot(b.length, b.width);
  const double dx = a.center.x - b.center.x, dy = a.center.y - b.center.y;
  if (dx * dx + dy * dy > (ra + rb) * (ra + rb)) return false;
  return bev_intersection_area(a, b) > 0.0;
}

inline const CatalogEntry& draw_catalog(rng::Engine& eng) {
  const double u = rng::uniform(eng, 0.0, 1.0);
  if (u < 0.72) return kCatalog[0];
  if (u < 0.92) return kCatalog[1];
  return kCatalog[2];
}

}  // namespace detail

/// Builds the scene for `spec`. Throws GenerationError when the requested
/// traffic cannot be placed without overlap.
inline Scene generate(const ScenarioSpec& spec) {
  spec.validate();
  using namespace detail;
  rng::Engine layout_eng = rng::make_engine(spec.seed, {rng::kSceneLayout, static_cast<std::uint64_t>(spec.archetype)});
  rng::Engine actor_eng = rng::make_engine(spec.seed, {rng::kSceneActors, static_cast<std::uint64_t>(spec.archetype)});
  const Layout L = make_layout(spec, layout_eng);

  Scene scene;
  scene.spec = spec;
  scene.occluders = L.occluders;
  const double dt = scene.frame_dt;
  const int nf = spec.n_frames;

  // Gaps keep separate vehicles in separate occupancy clusters.
  constexpr double kGapAlong = 3.0;
  constexpr double kGapAcross = 1.2;
  constexpr int kMaxAttempts = 1000;

  std::vector<Trajectory> placed;
  std::vector<std::vector<OrientedBox3D>> placed_boxes;  // [vehicle][frame], inflated

  auto try_place = [&](const Trajectory& tr) {
    std::vector<OrientedBox3D> boxes;
    boxes.reserve(nf);
    for (int f = 0; f < nf; ++f) {
      const OrientedBox3D b = box_at(L, tr, f * dt);
      for (const auto& occ : L.occluders)
        if (footprints_overlap(inflated(b, 1.0, 1.0), occ)) return false;
      boxes.push_back(inflated(b, kGapAlong, kGapAcross));
    }
    for (const auto& other : placed_boxes)
      for (int f = 0; f < nf; ++f)
        if (footprints_overlap(boxes[f], other[f])) return false;
    placed.push_back(tr);
    placed_boxes.push_back(std::move(boxes));
    return true;
  };

  // Vehicle agents first, in id order.
  for (int i = 0; i < spec.n_vehicle_agents; ++i) {
    const AgentSlot slot = L.agent_slots[std::min<std::size_t>(i, L.agent_slots.size() - 1)];
    const Lane& lane = L.lanes[slot.lane];
    bool ok = false;
    for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
      Trajectory tr{slot.lane, rng::uniform(actor_eng, slot.s_lo, slot.s_hi),
                    rng::uniform(actor_eng, lane.speed_lo, lane.speed_hi), kSedan};
      if (i >= static_cast<int>(L.agent_slots.size())) {
        // Extra agents go anywhere traffic may go.
        tr.lane = static_cast<std::size_t>(rng::uniform_int(actor_eng, 0, static_cast<int>(L.lanes.size()) - 1));
        const Lane& any = L.lanes[tr.lane];
        tr.s0 = rng::uniform(actor_eng, any.spawn_lo, any.spawn_hi);
        tr.speed = rng::uniform(actor_eng, any.speed_lo, any.speed_hi);
      }
      ok = try_place(tr);
    }
    if (!ok) throw GenerationError("could not place vehicle agent " + std::to_string(i));
  }

  double total_weight = 0.0;
  for (const Lane& lane : L.lanes) total_weight += lane.weight;
  for (int i = 0; i < spec.n_actors; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
      double u = rng::uniform(actor_eng, 0.0, total_weight);
      std::size_t li = 0;
      while (li + 1 < L.lanes.size() && u >= L.lanes[li].weight) u -= L.lanes[li++].weight;
      const Lane& lane = L.lanes[li];
      const CatalogEntry& size = draw_catalog(actor_eng);
      Trajectory tr{li, rng::uniform(actor_eng, lane.spawn_lo, lane.spawn_hi),
                    rng::uniform(actor_eng, lane.speed_lo, lane.speed_hi), size};
      ok = try_place(tr);
    }
    if (!ok) throw GenerationError("could not place actor " + std::to_string(i) + " without overlap");
  }

  // Agents: vehicles then infrastructure.
  const int nv = spec.n_vehicle_agents;
  for (int i = 0; i < nv; ++i) {
    const OrientedBox3D b0 = box_at(L, placed[i], 0.0);
    scene.agents.push_back(
        {i, AgentKind::Vehicle, Pose(b0.center.x, b0.center.y, mounts::kVehicleSensorHeight, b0.yaw), i == 0});
  }
  for (int j = 0; j < spec.n_infra_agents; ++j) {
    Pose site = L.infra_sites[static_cast<std::size_t>(j) % L.infra_sites.size()];
    if (j >= static_cast<int>(L.infra_sites.size())) {
      // Additional roadside units share the site pattern, mirrored.
      site = Pose(-site.x, -site.y, site.z, site.yaw + kPi);
    }
    scene.agents.push_back({nv + j, AgentKind::Infrastructure, site, false});
  }

  scene.frames.resize(nf);
  for (int f = 0; f < nf; ++f) {
    Frame& fr = scene.frames[f];
    for (std::size_t k = nv; k < placed.size(); ++k) fr.actors.push_back(box_at(L, placed[k], f * dt));
    for (int i = 0; i < nv; ++i) {
      const OrientedBox3D b = box_at(L, placed[i], f * dt);
      fr.agent_poses.push_back(Pose(b.center.x, b.center.y, mounts::kVehicleSensorHeight, b.yaw));
    }
    for (int j = 0; j < spec.n_infra_agents; ++j) fr.agent_poses.push_back(scene.agents[nv + j].mount_pose);
  }
  return scene;
}

}  // namespace infracp
