#pragma once

// Spinning LiDAR simulation. Each (channel, azimuth) beam returns the first
// surface it meets among traffic, vehicle-agent bodies, static occluders and
// the ground plane z = 0. Points are reported in the sensor frame.

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "infracp/geometry.hpp"
#include "infracp/scene.hpp"

namespace infracp {

struct LidarConfig {
  int n_channels = 32;
  Interval vertical_fov{deg_to_rad(-25.0), deg_to_rad(5.0)};  // radians
  double azimuth_step = deg_to_rad(0.5);                        // radians
  double max_range = 120.0;
  double min_range = 0.5;

  int azimuth_count() const { return static_cast<int>(std::lround(2.0 * kPi / azimuth_step)); }

  void validate() const {
    if (n_channels < 1) throw std::invalid_argument("LidarConfig: need at least one channel");
    if (!(min_range >= 0.0 && min_range < max_range)) throw std::invalid_argument("LidarConfig: bad range limits");
    if (!(vertical_fov.lo <= vertical_fov.hi)) throw std::invalid_argument("LidarConfig: bad vertical fov");
    if (!(azimuth_step > 0.0)) throw std::invalid_argument("LidarConfig: azimuth step must be positive");
    const double n = 2.0 * kPi / azimuth_step;
    if (std::abs(n - std::round(n)) * azimuth_step > 1e-9)
      throw std::invalid_argument("LidarConfig: azimuth step must divide a full turn");
  }

  /// Elevation of channel `c`, evenly spread over the vertical field of view.
  double elevation(int c) const {
    if (n_channels == 1) return 0.5 * (vertical_fov.lo + vertical_fov.hi);
    return vertical_fov.lo + (vertical_fov.hi - vertical_fov.lo) * c / (n_channels - 1);
  }
};

inline LidarConfig vehicle_lidar() { return {}; }

inline LidarConfig infra_lidar() {
  LidarConfig cfg;
  cfg.vertical_fov = {deg_to_rad(-60.0), deg_to_rad(5.0)};
  return cfg;
}

inline LidarConfig default_lidar(AgentKind kind) {
  return kind == AgentKind::Vehicle ? vehicle_lidar() : infra_lidar();
}

struct PointCloud {
  std::vector<Vec3> points;  // sensor frame
  int source_agent = -1;
  int timestamp = 0;  // frame index

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

namespace detail {

/// Azimuth bins (sensor frame) that a box's footprint can cover as seen from
/// `origin`. Returns false when the origin lies over the footprint, in which
/// case every bin is a candidate.
inline bool azimuth_span(const OrientedBox3D& box, const Pose& sensor, double& lo, double& hi) {
  if (box.contains({sensor.x, sensor.y, box.center.z})) return false;
  const Vec2 o{sensor.x, sensor.y};
  const auto corners = box.bev_corners();
  const double ac = std::atan2(box.center.y - o.y, box.center.x - o.x);
  lo = 0.0;
  hi = 0.0;
  for (const Vec2& c : corners) {
    const double d = normalize_angle(std::atan2(c.y - o.y, c.x - o.x) - ac);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  lo += ac - sensor.yaw;
  hi += ac - sensor.yaw;
  return true;
}

}  // namespace detail

/// Simulates one sweep of `agent`'s LiDAR at `frame`. The agent's own body is
/// transparent to its sensor.
inline PointCloud raycast(const Scene& scene, std::size_t frame, const AgentSpec& agent, const LidarConfig& cfg) {
  cfg.validate();
  const Pose& sensor = agent_pose(scene, frame, agent.id);
  const Vec3 origin = sensor.position();

  std::vector<OrientedBox3D> obstacles;
  for (const SceneObject& obj : frame_objects(scene, frame))
    if (obj.agent != agent.id) obstacles.push_back(obj.box);
  obstacles.insert(obstacles.end(), scene.occluders.begin(), scene.occluders.end());

  const int n_az = cfg.azimuth_count();
  std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(n_az));
  std::vector<PreparedBox> prepared;
  prepared.reserve(obstacles.size());
  for (const OrientedBox3D& b : obstacles) {
    const double reach = 0.5 * std::hypot(b.length, std::hypot(b.width, b.height));
    if (norm(b.center - origin) - reach > cfg.max_range) continue;
    const auto idx = static_cast<std::uint32_t>(prepared.size());
    prepared.emplace_back(b);
    double lo = 0.0, hi = 0.0;
    if (!detail::azimuth_span(b, sensor, lo, hi)) {
      for (auto& bin : bins) bin.push_back(idx);
      continue;
    }
    // One bin of slack on each side guards against rounding at the edges.
    const long k0 = static_cast<long>(std::floor(lo / cfg.azimuth_step)) - 1;
    const long k1 = static_cast<long>(std::ceil(hi / cfg.azimuth_step)) + 1;
    for (long k = k0; k <= k1 && k - k0 < n_az; ++k) bins[static_cast<std::size_t>(((k % n_az) + n_az) % n_az)].push_back(idx);
  }

  std::vector<double> cos_el(cfg.n_channels), sin_el(cfg.n_channels);
  for (int c = 0; c < cfg.n_channels; ++c) {
    cos_el[c] = std::cos(cfg.elevation(c));
    sin_el[c] = std::sin(cfg.elevation(c));
  }

  PointCloud cloud;
  cloud.source_agent = agent.id;
  cloud.timestamp = static_cast<int>(frame);
  for (int k = 0; k < n_az; ++k) {
    const double az = k * cfg.azimuth_step;
    const double ca = std::cos(az), sa = std::sin(az);
    const double cw = std::cos(az + sensor.yaw), sw = std::sin(az + sensor.yaw);
    const auto& cand = bins[static_cast<std::size_t>(k)];
    for (int c = 0; c < cfg.n_channels; ++c) {
      const Vec3 dir{cos_el[c] * cw, cos_el[c] * sw, sin_el[c]};
      double t_best = std::numeric_limits<double>::infinity();
      if (dir.z < 0.0) t_best = -origin.z / dir.z;
      for (std::uint32_t i : cand) {
        if (auto t = prepared[i].hit(origin, dir); t && *t < t_best) t_best = *t;
      }
      if (t_best < cfg.min_range || t_best > cfg.max_range) continue;
      cloud.points.push_back({t_best * cos_el[c] * ca, t_best * cos_el[c] * sa, t_best * sin_el[c]});
    }
  }
  return cloud;
}

/// Number of cloud points inside `actor` grown by 1 cm, with the cloud mapped
/// to the world through `agent_pose`.
inline std::size_t points_on_actor(const PointCloud& cloud, const OrientedBox3D& actor, const Pose& agent_pose) {
  std::size_t n = 0;
  for (const Vec3& p : cloud.points)
    if (actor.contains(agent_pose.to_parent(p), 0.01)) ++n;
  return n;
}

// Debug dump: little-endian uint64 point count, then float32 x, y, z triples.

inline void write_cloud_binary(std::ostream& os, const PointCloud& cloud) {
  auto put_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto put_f32 = [&](float f) {
    const auto v = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  put_u64(cloud.points.size());
  for (const Vec3& p : cloud.points) {
    put_f32(static_cast<float>(p.x));
    put_f32(static_cast<float>(p.y));
    put_f32(static_cast<float>(p.z));
  }
}

inline std::vector<Vec3> read_cloud_binary(std::istream& is) {
  auto get_bytes = [&](int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      const int c = is.get();
      if (c == std::char_traits<char>::eof()) throw std::runtime_error("point cloud dump truncated");
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
  };
  const std::uint64_t n = get_bytes(8);
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Vec3 p;
    p.x = std::bit_cast<float>(static_cast<std::uint32_t>(get_bytes(4)));
    p.y = std::bit_cast<float>(static_cast<std::uint32_t>(get_bytes(4)));
    p.z = std::bit_cast<float>(static_cast<std::uint32_t>(get_bytes(4)));
    pts.push_back(p);
  }
  return pts;
}

}  // namespace infracp
